//! The authoritative simulation loop.
//!
//! Order of work inside physics tick `k` (time `k / physics_rate`):
//! 1. scripted operator inputs due at this tick are queued;
//! 2. on detect ticks the perception frame is rendered from the current pose;
//! 3. on face ticks in Search or Reconfirm every embedding is matched against
//!    the registry;
//! 4. on control ticks one queued button and the latest manual velocity are
//!    handed to the mission together with the frame;
//! 5. the tick is recorded and the plant advances by one physics step under
//!    the held command.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{BoundingBox, DetectionFrame, KeypointSet, VelocityCommand, WorldPose};
use crate::identity::Registry;
use crate::mission::{Button, FaceMatch, Mission, MissionEvent, MissionInput, Mode, OperatorInput};
use crate::sim::perception::{render_perception, stream, PerceptionRng, PersonSnapshot, RenderTick};
use crate::sim::plant::{plant_step, PlantState};
use crate::sim::scenario::{Scenario, ScenarioError};
use crate::sim::schedule::{RateSchedule, Scheduler};
use crate::sim::telemetry::TickRecord;
use crate::sim::world::{noisy_embedding, random_truth_embedding, torso_scale_at, Person};
use crate::sysid::{
    fit_first_order, generate_excitation, simulate_model, ExcitationPattern, FirstOrderModel, SysIdError,
    TelemetrySeries,
};

const STREAM_IDENTIFY: u64 = 4;
const STREAM_TEMPLATES: u64 = 5;
const STREAM_PERSON_BASE: u64 = 1000;

/// Identification flight: square-wave command on one axis, velocity measured
/// with white noise of `noise_sigma`, then a first-order fit.
pub fn identify_axis<R: Rng + ?Sized>(
    model: &FirstOrderModel,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<FirstOrderModel, SysIdError> {
    let dt = 0.02;
    let u = generate_excitation(ExcitationPattern::SquareWave, 0.8, 4.0, 20.0, dt)?;
    let mut v = simulate_model(model, &u, dt, 0.0);
    for x in v.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *x += noise_sigma * n;
    }
    Ok(fit_first_order(&TelemetrySeries::new(dt, u, v)?)?.0)
}

/// What a live viewer sees of one person.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonView {
    pub track_id: u32,
    pub bbox: BoundingBox,
    pub keypoints: Option<KeypointSet>,
    /// The locked target, or a face matched on the latest face tick.
    pub matched: bool,
}

/// Immutable copy of the state published to viewers.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tick: u64,
    pub t: f64,
    pub mode: Mode,
    pub pose: WorldPose,
    pub people: Vec<PersonView>,
    pub range_est_cm: Option<f64>,
    pub command: VelocityCommand,
    pub target_id: Option<u32>,
}

/// Position and heading of a person at `t`, including the radial
/// disturbance relative to the vehicle.
fn person_position(person: &Person, scenario: &Scenario, uav: &WorldPose, t: f64) -> (f64, f64, f64) {
    let p = person.script.pose_at(t);
    let d = &scenario.disturbance;
    if d.sine_amplitude_cm == 0.0 {
        return (p.x, p.y, p.heading);
    }
    let offset = d.sine_amplitude_cm / 100.0 * libm::sin(core::f64::consts::TAU * t / d.sine_period_s);
    let (dx, dy) = (p.x - uav.x, p.y - uav.y);
    let r = libm::hypot(dx, dy);
    if r < 1e-9 {
        return (p.x, p.y, p.heading);
    }
    (p.x + offset * dx / r, p.y + offset * dy / r, p.heading)
}

fn snapshots<'a>(people: &'a [Person], scenario: &Scenario, uav: &WorldPose, t: f64) -> Vec<PersonSnapshot<'a>> {
    people
        .iter()
        .map(|p| {
            let (x, y, heading) = person_position(p, scenario, uav, t);
            PersonSnapshot {
                id: p.id,
                x,
                y,
                heading,
                height_cm: p.height_cm,
                torso_scale: torso_scale_at(&scenario.posture_events, p.id, t),
                embedding: &p.embedding_truth,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    dt: f64,
    tick: u64,
    scheduler: Scheduler,
    plant: PlantState,
    people: Vec<Person>,
    mission: Mission,
    registry: Registry,
    rng: PerceptionRng,
    command: VelocityCommand,
    scripted: Vec<(u64, OperatorInput)>,
    next_scripted: usize,
    buttons: VecDeque<Button>,
    pending_manual: Option<VelocityCommand>,
    last_control_t: Option<f64>,
    range_est_cm: Option<f64>,
    motion_hold: bool,
    last_pose_frame: Option<DetectionFrame>,
    last_face_matches: Vec<FaceMatch>,
    /// Models the controllers were tuned on.
    design_models: [FirstOrderModel; 3],
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        Self::with_registry(scenario, Registry::new())
    }

    /// Builds the simulation with extra templates, e.g. from a registry file.
    /// Scenario templates are captured first; `extra` entries replace them on
    /// label collisions.
    pub fn with_registry(scenario: &Scenario, extra: Registry) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let s = scenario.clone();
        let scripts = s.motion_scripts()?;
        let people: Vec<Person> = s
            .people
            .iter()
            .zip(scripts)
            .map(|(p, script)| {
                let mut rng = match p.embedding_seed {
                    Some(seed) => stream(seed, 0),
                    None => stream(s.seed, STREAM_PERSON_BASE + u64::from(p.id)),
                };
                Person {
                    id: p.id,
                    height_cm: p.height_cm,
                    embedding_truth: random_truth_embedding(&mut rng),
                    script,
                }
            })
            .collect();

        let mut registry = Registry::new();
        let mut template_rng = stream(s.seed, STREAM_TEMPLATES);
        for t in &s.templates {
            let person = people.iter().find(|p| p.id == t.person).expect("validated reference");
            let e = noisy_embedding(&person.embedding_truth, s.perception.embedding_noise_sigma, &mut template_rng);
            registry
                .capture(t.label.clone(), e, 0.0)
                .map_err(|e| ScenarioError::new("templates", e.to_string()))?;
        }
        for t in extra.templates() {
            registry
                .capture(t.label.clone(), t.embedding.clone(), t.captured_at)
                .map_err(|e| ScenarioError::new("registry", e.to_string()))?;
        }
        if let Some(label) = &s.mission.target_label {
            let captured_later = s.inputs.iter().any(|i| i.label.as_deref() == Some(label.as_str()));
            if registry.get(label).is_none() && !captured_later {
                return Err(ScenarioError::new(
                    "mission.target_label",
                    format!("no template or scripted capture with label \"{label}\""),
                ));
            }
        }

        let calibration = s.build_calibration()?;
        let design_models = if s.control.identify {
            let mut rng = stream(s.seed, STREAM_IDENTIFY);
            let sigma = s.disturbance.output_noise_sigma;
            let mut fit = |m: &FirstOrderModel, path: &str| {
                identify_axis(m, sigma, &mut rng)
                    .map_err(|e| ScenarioError::new(path, format!("identification failed: {e}")))
            };
            [fit(&s.plant.x, "plant.x")?, fit(&s.plant.z, "plant.z")?, fit(&s.plant.yaw, "plant.yaw")?]
        } else {
            [s.plant.x, s.plant.z, s.plant.yaw]
        };
        let bank = s.build_controllers(&design_models[0], &design_models[1], &design_models[2])?;
        let mission = Mission::new(s.mission.clone(), s.camera, calibration, bank);

        let phys = s.physics_rate_hz;
        let p = &s.perception;
        let scheduler = Scheduler {
            detect: RateSchedule::new(p.detect_rate_hz, phys),
            pose: RateSchedule::new(p.pose_rate_hz, phys),
            face: RateSchedule::new(p.face_rate_hz, phys),
            control: RateSchedule::new(p.control_rate_hz, phys),
        };
        let scripted = s
            .inputs
            .iter()
            .map(|i| {
                let tick = libm::round(i.t * f64::from(phys)) as u64;
                let input = OperatorInput {
                    manual_velocity: i.manual,
                    button: i.to_button(),
                };
                (tick, input)
            })
            .collect();

        Ok(Self {
            dt: 1.0 / f64::from(phys),
            tick: 0,
            scheduler,
            plant: PlantState::at_rest(s.start_pose()),
            people,
            mission,
            registry,
            rng: PerceptionRng::new(s.seed),
            command: VelocityCommand::ZERO,
            scripted,
            next_scripted: 0,
            buttons: VecDeque::new(),
            pending_manual: None,
            last_control_t: None,
            range_est_cm: None,
            motion_hold: false,
            last_pose_frame: None,
            last_face_matches: Vec::new(),
            design_models,
            scenario: s,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mission(&self) -> &Mission {
        &self.mission
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn people(&self) -> &[Person] {
        &self.people
    }

    /// Forward, vertical and yaw models the controllers were tuned on.
    pub fn design_models(&self) -> [FirstOrderModel; 3] {
        self.design_models
    }

    /// Queues live operator input. Buttons are delivered one per control
    /// tick in arrival order; the newest manual velocity wins.
    pub fn push_input(&mut self, input: OperatorInput) {
        if let Some(b) = input.button {
            self.buttons.push_back(b);
        }
        if input.manual_velocity.is_some() {
            self.pending_manual = input.manual_velocity;
        }
    }

    fn range_true_cm(&self, t: f64) -> Option<f64> {
        let id = self.mission.state.target_track_id?;
        let person = self.people.iter().find(|p| p.id == id)?;
        let (x, y, _) = person_position(person, &self.scenario, &self.plant.pose, t);
        Some(100.0 * self.plant.pose.ground_distance_to(x, y))
    }

    fn face_matches(&self, frame: &DetectionFrame) -> Vec<FaceMatch> {
        frame
            .detections
            .iter()
            .filter_map(|d| {
                let result = self.registry.best_match(d.embedding.as_ref()?)?;
                Some(FaceMatch {
                    track_id: d.track_id,
                    result,
                })
            })
            .collect()
    }

    /// Advances one physics tick and returns its record.
    pub fn step(&mut self) -> TickRecord {
        let k = self.tick;
        let t = self.time();
        let flags = self.scheduler.flags(k);

        while let Some((due, input)) = self.scripted.get(self.next_scripted) {
            if *due > k {
                break;
            }
            let input = input.clone();
            self.next_scripted += 1;
            self.push_input(input);
        }

        let mut frame = None;
        let mut frame_dropped = false;
        if flags.detect {
            let tick = RenderTick {
                tick: k,
                pose: flags.pose,
                face: flags.face,
            };
            let people = snapshots(&self.people, &self.scenario, &self.plant.pose, t);
            frame = render_perception(
                &people,
                &self.plant.pose,
                &self.scenario.camera,
                &self.scenario.perception,
                &mut self.rng,
                tick,
                t,
            );
            frame_dropped = frame.is_none();
            if flags.pose {
                if let Some(f) = &frame {
                    self.last_pose_frame = Some(f.clone());
                }
            }
        }

        let matching = matches!(self.mission.mode(), Mode::Search | Mode::Reconfirm);
        let face_matches = match (&frame, flags.face && matching) {
            (Some(f), true) => Some(self.face_matches(f)),
            _ => None,
        };
        if flags.face {
            self.last_face_matches = face_matches.clone().unwrap_or_default();
        }

        let mut events: Vec<MissionEvent> = Vec::new();
        let mut centering = None;
        if flags.control {
            let dt = self.last_control_t.map_or(1.0 / f64::from(self.scheduler.control.rate_hz()), |p| t - p);
            self.last_control_t = Some(t);
            let operator = OperatorInput {
                manual_velocity: self.pending_manual.take(),
                button: self.buttons.pop_front(),
            };
            let out = self.mission.step(
                operator,
                MissionInput {
                    detections: frame.as_ref(),
                    face_matches: face_matches.as_deref(),
                    now_s: t,
                    dt,
                },
            );
            if let Some((label, embedding)) = out.capture {
                // Labels are non-empty by construction.
                let _ = self.registry.capture(label, embedding, t);
            }
            self.command = out.command;
            self.range_est_cm = out.range_est_cm;
            self.motion_hold = out.motion_hold;
            centering = out.centering_error_px;
            events = out.events;
        }

        let record = TickRecord {
            tick: k,
            t,
            flags,
            mode: self.mission.mode(),
            pose: self.plant.pose,
            command: self.command,
            range_est_cm: self.range_est_cm,
            range_true_cm: self.range_true_cm(t),
            target_id: self.mission.state.target_track_id,
            motion_hold: self.motion_hold,
            centering_error_px: centering,
            frame_dropped,
            events,
        };

        self.plant = plant_step(&self.plant, &self.scenario.plant, &self.command, self.dt);
        self.tick += 1;
        record
    }

    /// Runs for `duration_s` of simulated time.
    pub fn run_for(&mut self, duration_s: f64) -> Vec<TickRecord> {
        let n = libm::round(duration_s / self.dt) as u64;
        (0..n).map(|_| self.step()).collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        let target = self.mission.state.target_track_id;
        let people = self
            .last_pose_frame
            .as_ref()
            .map(|f| {
                f.detections
                    .iter()
                    .map(|d| PersonView {
                        track_id: d.track_id,
                        bbox: d.bbox,
                        keypoints: d.keypoints,
                        matched: Some(d.track_id) == target
                            || self
                                .last_face_matches
                                .iter()
                                .any(|m| m.track_id == d.track_id && m.result.matched),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Snapshot {
            tick: self.tick,
            t: self.time(),
            mode: self.mission.mode(),
            pose: self.plant.pose,
            people,
            range_est_cm: self.range_est_cm,
            command: self.command,
            target_id: target,
        }
    }
}

/// Builds and runs a scenario for `duration_s` (the scenario's own duration
/// when `None`).
pub fn run_closed_loop(scenario: &Scenario, duration_s: Option<f64>) -> Result<Vec<TickRecord>, ScenarioError> {
    let mut sim = Simulation::new(scenario)?;
    Ok(sim.run_for(duration_s.unwrap_or(scenario.duration_s)))
}
