//! PD controllers for the forward, vertical and yaw tracking axes.
//!
//! Every controller works on an error expressed so that a positive error
//! calls for a positive command. The bank converts the image-plane errors
//! accordingly: a target right of the crosshair (positive horizontal error)
//! needs a negative, clockwise yaw rate, and a target below the crosshair
//! (positive vertical error) needs the vehicle to descend.

use thiserror::Error;

use crate::geometry::VelocityCommand;
use crate::sysid::FirstOrderModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("infeasible tuning: {0}")]
    InfeasibleSpec(&'static str),
    #[error("invalid gains: {0}")]
    InvalidGains(&'static str),
    #[error("invalid limits: {0}")]
    InvalidLimits(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PDGains {
    pub kp: f64,
    pub kd: f64,
}

impl PDGains {
    pub fn new(kp: f64, kd: f64) -> Result<Self, ControlError> {
        let g = Self { kp, kd };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return Err(ControlError::InvalidGains("kp must be positive"));
        }
        if !(self.kd >= 0.0 && self.kd.is_finite()) {
            return Err(ControlError::InvalidGains("kd must be non-negative"));
        }
        Ok(())
    }
}

/// Output bounds and maximum output rate of change.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AxisLimits {
    pub cmd_min: f64,
    pub cmd_max: f64,
    /// Command units per second.
    pub slew_max: f64,
}

impl AxisLimits {
    pub fn new(cmd_min: f64, cmd_max: f64, slew_max: f64) -> Result<Self, ControlError> {
        let l = Self {
            cmd_min,
            cmd_max,
            slew_max,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn symmetric(max: f64, slew_max: f64) -> Self {
        Self {
            cmd_min: -max,
            cmd_max: max,
            slew_max,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.cmd_min < self.cmd_max) {
            return Err(ControlError::InvalidLimits("cmd_min must be below cmd_max"));
        }
        if !(self.slew_max > 0.0) {
            return Err(ControlError::InvalidLimits("slew_max must be positive"));
        }
        Ok(())
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.cmd_min, self.cmd_max)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.cmd_min && x <= self.cmd_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PDControllerState {
    pub prev_error: f64,
    /// Last emitted command, the reference for slew limiting.
    pub prev_output: f64,
    pub initialized: bool,
}

/// One PD update. The derivative is a backward difference on the error and is
/// zero on the first call. The raw command is clamped to the limits and then
/// slew-limited against the previous output (0 before the first call).
pub fn pd_step(
    gains: &PDGains,
    state: &PDControllerState,
    error: f64,
    dt: f64,
    limits: &AxisLimits,
) -> (f64, PDControllerState) {
    let derivative = if state.initialized {
        (error - state.prev_error) / dt
    } else {
        0.0
    };
    let raw = gains.kp * error + gains.kd * derivative;
    let clamped = limits.clamp(raw);
    let max_delta = limits.slew_max * dt;
    let output = limits.clamp(clamped.clamp(
        state.prev_output - max_delta,
        state.prev_output + max_delta,
    ));
    (
        output,
        PDControllerState {
            prev_error: error,
            prev_output: output,
            initialized: true,
        },
    )
}

/// Pole-placement tuning for an error driven by a first-order velocity loop
/// with integrating kinematics.
///
/// `model.gain` must be expressed as error units per second per command unit,
/// i.e. a unit command eventually reduces the error at `gain` units per
/// second. With `tau e'' + (1 + K kd) e' + K kp e = 0` the closed loop is
/// matched to `s^2 + 2 zeta wn s + wn^2` with `wn = 4 / (zeta settle_time)`:
///
/// `kp = tau wn^2 / K`, `kd = (2 zeta wn tau - 1) / K`.
pub fn tune_pd(
    model: &FirstOrderModel,
    settle_time: f64,
    damping: f64,
) -> Result<PDGains, ControlError> {
    if !(settle_time > 0.0 && settle_time.is_finite()) {
        return Err(ControlError::InfeasibleSpec("settle time must be positive"));
    }
    if !(0.7..=1.5).contains(&damping) {
        return Err(ControlError::InfeasibleSpec("damping must lie in [0.7, 1.5]"));
    }
    if !(model.gain > 0.0 && model.tau > 0.0) {
        return Err(ControlError::InfeasibleSpec("model gain and tau must be positive"));
    }
    let wn = 4.0 / (damping * settle_time);
    let kp = model.tau * wn * wn / model.gain;
    let kd = (2.0 * damping * wn * model.tau - 1.0) / model.gain;
    PDGains::new(kp, kd).map_err(|_| {
        ControlError::InfeasibleSpec("requested response is slower than the open-loop plant")
    })
}

/// A PD controller with its gains, limits and running state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisController {
    pub gains: PDGains,
    pub limits: AxisLimits,
    pub state: PDControllerState,
}

impl AxisController {
    pub fn new(gains: PDGains, limits: AxisLimits) -> Self {
        Self {
            gains,
            limits,
            state: PDControllerState::default(),
        }
    }

    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let (out, next) = pd_step(&self.gains, &self.state, error, dt, &self.limits);
        self.state = next;
        out
    }

    /// Overrides the last output, e.g. after an externally forced command.
    pub fn force_output(&mut self, output: f64) {
        self.state.prev_output = self.limits.clamp(output);
    }

    pub fn reset(&mut self) {
        self.state = PDControllerState::default();
    }
}

/// The three tracking controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerBank {
    /// Range error in centimeters, drives `vx`.
    pub x_axis: AxisController,
    /// Vertical pixel error, drives `vz`.
    pub z_axis: AxisController,
    /// Horizontal pixel error, drives `yaw_rate`.
    pub yaw_axis: AxisController,
}

impl ControllerBank {
    pub fn reset(&mut self) {
        self.x_axis.reset();
        self.z_axis.reset();
        self.yaw_axis.reset();
    }

    /// Runs all three controllers. `range_error_cm` is estimate minus
    /// setpoint; pixel errors are shoulder midpoint minus image center.
    pub fn step(
        &mut self,
        range_error_cm: f64,
        horiz_px_error: f64,
        vert_px_error: f64,
        dt: f64,
    ) -> VelocityCommand {
        VelocityCommand {
            vx: self.x_axis.step(range_error_cm, dt),
            vy: 0.0,
            vz: self.z_axis.step(-vert_px_error, dt),
            yaw_rate: self.yaw_axis.step(-horiz_px_error, dt),
        }
    }

    /// Centering only: yaw and vertical axes run, forward command is 0 and the
    /// forward controller is reset.
    pub fn step_centering(&mut self, horiz_px_error: f64, vert_px_error: f64, dt: f64) -> VelocityCommand {
        self.x_axis.reset();
        VelocityCommand {
            vx: 0.0,
            vy: 0.0,
            vz: self.z_axis.step(-vert_px_error, dt),
            yaw_rate: self.yaw_axis.step(-horiz_px_error, dt),
        }
    }
}

/// Converts an axis velocity model into the error-rate model that
/// [`tune_pd`] expects.
///
/// * forward: velocity in m/s, error in cm, so the scale is 100;
/// * yaw: yaw rate in rad/s, horizontal error in px, scale `focal_px`
///   (small-angle bearing);
/// * vertical: climb rate in m/s, vertical error in px at range `d` m, scale
///   `focal_px / d`.
pub fn error_rate_model(model: &FirstOrderModel, error_units_per_output_unit: f64) -> FirstOrderModel {
    FirstOrderModel {
        gain: model.gain * error_units_per_output_unit,
        tau: model.tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn generous() -> AxisLimits {
        AxisLimits::symmetric(1e9, 1e12)
    }

    #[test]
    fn zero_error_gives_zero_command() {
        let g = PDGains::new(2.0, 0.5).unwrap();
        let mut s = PDControllerState::default();
        for _ in 0..20 {
            let (out, next) = pd_step(&g, &s, 0.0, 0.05, &generous());
            assert_eq!(out, 0.0);
            s = next;
        }
    }

    #[test]
    fn pure_proportional() {
        let g = PDGains { kp: 0.5, kd: 0.0 };
        let (out, _) = pd_step(&g, &PDControllerState::default(), 2.0, 0.1, &generous());
        assert_eq!(out, 1.0);
    }

    #[test]
    fn pure_derivative() {
        // kp = 0 is outside PDGains' invariant; the raw law is still checked.
        let g = PDGains { kp: 0.0, kd: 1.0 };
        let (first, s) = pd_step(&g, &PDControllerState::default(), 1.0, 0.1, &generous());
        assert_eq!(first, 0.0);
        let (second, _) = pd_step(&g, &s, 1.5, 0.1, &generous());
        assert!((second - 5.0).abs() < 1e-12);
    }

    #[test]
    fn first_step_ignores_stale_prev_error() {
        let g = PDGains::new(1.0, 10.0).unwrap();
        let stale = PDControllerState {
            prev_error: 1e6,
            prev_output: 0.0,
            initialized: false,
        };
        let (out, _) = pd_step(&g, &stale, 0.3, 0.1, &generous());
        assert_eq!(out, 0.3);
    }

    #[test]
    fn slew_limits_output_change() {
        let g = PDGains::new(10.0, 0.0).unwrap();
        let lim = AxisLimits::new(-1.0, 1.0, 2.0).unwrap();
        let (out, s) = pd_step(&g, &PDControllerState::default(), 5.0, 0.1, &lim);
        assert!((out - 0.2).abs() < 1e-12);
        let (out, _) = pd_step(&g, &s, 5.0, 0.1, &lim);
        assert!((out - 0.4).abs() < 1e-12);
    }

    #[test]
    fn tuning_examples() {
        let m = FirstOrderModel::new(1.0, 0.35).unwrap();
        let g = tune_pd(&m, 2.0, 1.0).unwrap();
        // wn = 2: kp = 0.35 * 4, kd = (2 * 2 * 0.35 - 1).
        assert!((g.kp - 1.4).abs() < 1e-12);
        assert!((g.kd - 0.4).abs() < 1e-12);

        let m2 = FirstOrderModel::new(2.0, 0.35).unwrap();
        let g2 = tune_pd(&m2, 2.0, 1.0).unwrap();
        assert!((g2.kp - g.kp / 2.0).abs() < 1e-12);

        assert!(matches!(tune_pd(&m, 0.0, 1.0), Err(ControlError::InfeasibleSpec(_))));
        assert!(matches!(tune_pd(&m, 2.0, 0.5), Err(ControlError::InfeasibleSpec(_))));
        // Very slow request: kd would be negative.
        assert!(matches!(tune_pd(&m, 20.0, 1.0), Err(ControlError::InfeasibleSpec(_))));
    }

    fn bank() -> ControllerBank {
        let lim = AxisLimits::symmetric(1.0, 100.0);
        ControllerBank {
            x_axis: AxisController::new(PDGains::new(0.01, 0.001).unwrap(), lim),
            z_axis: AxisController::new(PDGains::new(0.002, 0.0).unwrap(), lim),
            yaw_axis: AxisController::new(PDGains::new(0.005, 0.0).unwrap(), AxisLimits::symmetric(1.57, 100.0)),
        }
    }

    #[test]
    fn bank_examples() {
        let mut b = bank();
        assert_eq!(b.step(0.0, 0.0, 0.0, 1.0 / 15.0), VelocityCommand::ZERO);

        let mut b = bank();
        let c = b.step(0.0, 100.0, 0.0, 1.0 / 15.0);
        assert_eq!(c.vx, 0.0);
        assert_eq!(c.vz, 0.0);
        // Target right of center: turn clockwise (negative yaw rate).
        assert!(c.yaw_rate < 0.0);

        let mut b = bank();
        let c = b.step(50.0, 0.0, 0.0, 1.0 / 15.0);
        assert!(c.vx > 0.0);

        let mut b = bank();
        let c = b.step(0.0, 0.0, 80.0, 1.0 / 15.0);
        assert!(c.vz < 0.0);
        assert_eq!(c.vy, 0.0);
    }

    proptest! {
        #[test]
        fn outputs_stay_within_limits(
            errors in prop::collection::vec(-1e4f64..1e4, 1..60),
            kp in 1e-4f64..10.0,
            kd in 0.0f64..10.0,
            lo in -3.0f64..-0.1,
            hi in 0.1f64..3.0,
            slew in 0.1f64..50.0,
        ) {
            let g = PDGains::new(kp, kd).unwrap();
            let lim = AxisLimits::new(lo, hi, slew).unwrap();
            let mut s = PDControllerState::default();
            for e in errors {
                let (out, next) = pd_step(&g, &s, e, 1.0 / 15.0, &lim);
                prop_assert!(lim.contains(out));
                prop_assert!((out - s.prev_output).abs() <= slew / 15.0 + 1e-12);
                s = next;
            }
        }

        #[test]
        fn proportional_homogeneity(e in -100.0f64..100.0, lambda in -5.0f64..5.0, kp in 0.01f64..2.0) {
            let g = PDGains::new(kp, 0.0).unwrap();
            let (a, _) = pd_step(&g, &PDControllerState::default(), e, 0.1, &generous());
            let (b, _) = pd_step(&g, &PDControllerState::default(), lambda * e, 0.1, &generous());
            prop_assert!((b - lambda * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn bank_sign_conventions(
            range in prop::collection::vec(0.0f64..400.0, 1..30),
            horiz in prop::collection::vec(0.0f64..640.0, 1..30),
        ) {
            // Proportional path only: a derivative term may legitimately brake.
            let mut b = bank();
            b.x_axis.gains.kd = 0.0;
            for (r, h) in range.iter().zip(&horiz) {
                let c = b.step(*r, *h, 0.0, 1.0 / 15.0);
                prop_assert!(c.vx >= 0.0);
                prop_assert!(c.yaw_rate <= 0.0);
            }
        }
    }
}
