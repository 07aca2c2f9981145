use core::f64::consts::{FRAC_PI_2, PI};

use sartrack_core::geometry::VelocityCommand;
use sartrack_core::mission::{Mode, OperatorInput};
use sartrack_core::sim::scenario::{ButtonName, PersonSpec, ScriptedInput, TemplateSpec, UavStart};
use sartrack_core::sim::world::Keyframe;
use sartrack_core::sim::{run_closed_loop, Scenario, Simulation};

fn kf(t: f64, x: f64, y: f64, heading: Option<f64>) -> Keyframe {
    Keyframe { t, x, y, heading }
}

fn press(t: f64, b: ButtonName) -> ScriptedInput {
    ScriptedInput {
        t,
        button: Some(b),
        label: None,
        manual: None,
    }
}

/// A person standing, then walking away, then turning a corner.
fn tracking() -> Scenario {
    Scenario {
        seed: 7,
        duration_s: 40.0,
        uav: UavStart {
            heading: -FRAC_PI_2,
            ..Default::default()
        },
        people: vec![PersonSpec {
            id: 1,
            height_cm: 180.0,
            embedding_seed: None,
            script: vec![
                kf(0.0, 2.2, 0.0, Some(PI)),
                kf(8.0, 2.2, 0.0, None),
                kf(23.0, 9.7, 0.0, None),
                kf(38.0, 9.7, 7.5, None),
            ],
        }],
        templates: vec![TemplateSpec {
            label: "alice".into(),
            person: 1,
        }],
        inputs: vec![press(0.5, ButtonName::StartSearch), press(6.0, ButtonName::StartTrack)],
        ..Scenario::default()
    }
}

#[test]
fn follows_a_walking_person() {
    let log = run_closed_loop(&tracking(), None).unwrap();
    let lock = log.iter().find(|r| r.mode == Mode::Track).expect("never locked");
    assert!(lock.t < 6.5, "locked at {}", lock.t);
    assert_eq!(lock.target_id, Some(1));

    let window: Vec<_> = log.iter().filter(|r| r.t >= 8.0 && r.t < 36.0).collect();
    assert!(window.iter().all(|r| r.mode == Mode::Track));
    let in_band = window
        .iter()
        .filter(|r| r.range_true_cm.is_some_and(|d| (d - 200.0).abs() <= 30.0))
        .count();
    assert!(in_band as f64 >= 0.95 * window.len() as f64, "{in_band} / {}", window.len());

    let h: Vec<f64> = window.iter().filter_map(|r| r.centering_error_px.map(|c| c.0)).collect();
    let rms = (h.iter().map(|x| x * x).sum::<f64>() / h.len() as f64).sqrt();
    assert!(rms < 30.0, "horizontal rms {rms}");
}

#[test]
fn repeated_runs_are_identical() {
    let a = run_closed_loop(&tracking(), Some(12.0)).unwrap();
    let b = run_closed_loop(&tracking(), Some(12.0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn free_vehicle_without_input_holds_position() {
    let s = Scenario {
        duration_s: 5.0,
        ..tracking()
    };
    let s = Scenario { inputs: vec![], ..s };
    let log = run_closed_loop(&s, None).unwrap();
    let start = log[0].pose;
    assert!(log.iter().all(|r| r.mode == Mode::Free && r.pose == start && r.command == VelocityCommand::ZERO));
}

#[test]
fn scripted_inputs_equal_pushed_inputs() {
    let mut scripted = tracking();
    scripted.duration_s = 10.0;
    scripted.inputs.insert(
        0,
        ScriptedInput {
            t: 0.23,
            button: None,
            label: None,
            manual: Some(VelocityCommand {
                vx: 0.2,
                vy: 0.0,
                vz: 0.1,
                yaw_rate: 0.3,
            }),
        },
    );
    let expected = run_closed_loop(&scripted, None).unwrap();

    let bare = Scenario {
        inputs: vec![],
        ..scripted.clone()
    };
    let mut sim = Simulation::new(&bare).unwrap();
    let mut got = Vec::new();
    for _ in 0..expected.len() {
        for i in &scripted.inputs {
            if (i.t * 100.0).round() as u64 == sim.tick() {
                sim.push_input(OperatorInput {
                    manual_velocity: i.manual,
                    button: i.to_button(),
                });
            }
        }
        got.push(sim.step());
    }
    assert_eq!(got, expected);
}
