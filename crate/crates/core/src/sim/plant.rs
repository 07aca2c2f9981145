//! Per-axis first-order velocity dynamics with kinematic integration.

use crate::geometry::{normalize_heading, VelocityCommand, WorldPose};
use crate::sysid::FirstOrderModel;

/// Command-to-velocity models. `x` and `y` act along the body axes, `z` is
/// vertical and `yaw` is the heading rate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PlantModels {
    pub x: FirstOrderModel,
    pub y: FirstOrderModel,
    pub z: FirstOrderModel,
    pub yaw: FirstOrderModel,
}

impl Default for PlantModels {
    fn default() -> Self {
        Self {
            x: FirstOrderModel { gain: 1.5, tau: 0.4 },
            y: FirstOrderModel { gain: 1.5, tau: 0.4 },
            z: FirstOrderModel { gain: 1.0, tau: 0.3 },
            yaw: FirstOrderModel { gain: 1.0, tau: 0.25 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub pose: WorldPose,
    /// Body-frame forward velocity, m/s.
    pub v_x: f64,
    /// Body-frame lateral velocity (positive left), m/s.
    pub v_y: f64,
    pub v_z: f64,
    /// rad/s, counter-clockwise.
    pub yaw_v: f64,
}

impl PlantState {
    pub fn at_rest(pose: WorldPose) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }
}

/// Advances the plant by `dt` under a zero-order-held command.
///
/// Velocities follow [`FirstOrderModel::step`], the recurrence used by the
/// identifier. Positions integrate the mean of the old and new velocities,
/// with the body velocity rotated at the mid-step heading. The vehicle cannot
/// descend below the ground.
pub fn plant_step(state: &PlantState, models: &PlantModels, cmd: &VelocityCommand, dt: f64) -> PlantState {
    let v_x = models.x.step(state.v_x, cmd.vx, dt);
    let v_y = models.y.step(state.v_y, cmd.vy, dt);
    let mut v_z = models.z.step(state.v_z, cmd.vz, dt);
    let yaw_v = models.yaw.step(state.yaw_v, cmd.yaw_rate, dt);

    let d_heading = 0.5 * (state.yaw_v + yaw_v) * dt;
    let mid = state.pose.heading + 0.5 * d_heading;
    let (s, c) = libm::sincos(mid);
    let fwd = 0.5 * (state.v_x + v_x) * dt;
    let lat = 0.5 * (state.v_y + v_y) * dt;
    let mut z = state.pose.z + 0.5 * (state.v_z + v_z) * dt;
    if z <= 0.0 {
        z = 0.0;
        v_z = v_z.max(0.0);
    }
    PlantState {
        pose: WorldPose {
            x: state.pose.x + fwd * c - lat * s,
            y: state.pose.y + fwd * s + lat * c,
            z,
            heading: normalize_heading(state.pose.heading + d_heading),
        },
        v_x,
        v_y,
        v_z,
        yaw_v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysid::{generate_excitation, simulate_model, ExcitationPattern};
    use proptest::prelude::*;

    #[test]
    fn zero_command_from_rest_stays_put() {
        let s0 = PlantState::at_rest(WorldPose::new(1.0, -2.0, 1.5, 0.3));
        let mut s = s0;
        for _ in 0..500 {
            s = plant_step(&s, &PlantModels::default(), &VelocityCommand::ZERO, 0.01);
        }
        assert_eq!(s, s0);
    }

    #[test]
    fn no_lag_limit_advances_along_heading() {
        let fast = FirstOrderModel { gain: 1.0, tau: 1e-6 };
        let models = PlantModels {
            x: fast,
            y: fast,
            z: fast,
            yaw: fast,
        };
        let heading = core::f64::consts::FRAC_PI_3;
        let mut s = PlantState::at_rest(WorldPose::new(0.0, 0.0, 1.0, heading));
        let cmd = VelocityCommand {
            vx: 1.0,
            ..VelocityCommand::ZERO
        };
        s = plant_step(&s, &models, &cmd, 0.01);
        // First step averages rest and full speed.
        assert!((libm::hypot(s.pose.x, s.pose.y) - 0.005).abs() < 1e-9);
        let before = s.pose;
        s = plant_step(&s, &models, &cmd, 0.01);
        let (dx, dy) = (s.pose.x - before.x, s.pose.y - before.y);
        assert!((libm::hypot(dx, dy) - 0.01).abs() < 1e-9);
        assert!((libm::atan2(dy, dx) - heading).abs() < 1e-9);
    }

    #[test]
    fn square_wave_trace_equals_simulate_model() {
        let models = PlantModels::default();
        let dt = 0.01;
        let u = generate_excitation(ExcitationPattern::SquareWave, 0.8, 2.0, 10.0, dt).unwrap();
        let expected = simulate_model(&models.x, &u, dt, 0.0);
        let mut s = PlantState::at_rest(WorldPose::new(0.0, 0.0, 1.0, 0.0));
        let mut trace = Vec::new();
        for &uk in &u {
            trace.push(s.v_x);
            let cmd = VelocityCommand { vx: uk, ..VelocityCommand::ZERO };
            s = plant_step(&s, &models, &cmd, dt);
        }
        assert_eq!(trace, expected);
    }

    #[test]
    fn ground_floor() {
        let mut s = PlantState::at_rest(WorldPose::new(0.0, 0.0, 0.05, 0.0));
        let down = VelocityCommand { vz: -1.0, ..VelocityCommand::ZERO };
        for _ in 0..200 {
            s = plant_step(&s, &PlantModels::default(), &down, 0.01);
            assert!(s.pose.z >= 0.0);
        }
        assert_eq!(s.pose.z, 0.0);
    }

    proptest! {
        #[test]
        fn free_decay_is_monotone(vx in -2.0f64..2.0, vz in -1.0f64..1.0, w in -2.0f64..2.0) {
            let mut s = PlantState {
                pose: WorldPose::new(0.0, 0.0, 100.0, 0.0),
                v_x: vx,
                v_y: 0.0,
                v_z: vz,
                yaw_v: w,
            };
            for _ in 0..300 {
                let n = plant_step(&s, &PlantModels::default(), &VelocityCommand::ZERO, 0.01);
                prop_assert!(n.v_x.abs() <= s.v_x.abs());
                prop_assert!(n.v_z.abs() <= s.v_z.abs());
                prop_assert!(n.yaw_v.abs() <= s.yaw_v.abs());
                s = n;
            }
        }

        #[test]
        fn velocity_bounded_by_gain_times_limit(cmds in proptest::collection::vec(-1.0f64..1.0, 1..300)) {
            let models = PlantModels::default();
            let mut s = PlantState::at_rest(WorldPose::new(0.0, 0.0, 50.0, 0.0));
            for c in cmds {
                let cmd = VelocityCommand { vx: c, vy: c, vz: c, yaw_rate: 1.57 * c };
                s = plant_step(&s, &models, &cmd, 0.01);
                prop_assert!(s.v_x.abs() <= models.x.gain + 1e-12);
                prop_assert!(s.v_z.abs() <= models.z.gain + 1e-12);
                prop_assert!(s.yaw_v.abs() <= 1.57 * models.yaw.gain + 1e-12);
            }
        }
    }
}
