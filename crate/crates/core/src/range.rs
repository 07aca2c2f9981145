//! Monocular range from the shoulder-hip pixel distance.
//!
//! The range model is the quadratic `y = k1 x^2 + k2 x + k3` (cm) in the
//! shoulder-hip distance `x` (px), fitted by least squares on calibration
//! samples and only trusted on the sampled pixel domain. A rate guard rejects
//! range jumps that are faster than any plausible closing speed; those come
//! from posture changes such as leaning toward the camera.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub const DEFAULT_TORSO_RATIO: f64 = 0.28;
pub const MALE_HEIGHT_CM: f64 = 180.0;
pub const FEMALE_HEIGHT_CM: f64 = 171.0;
/// Upper end of the calibrated range.
pub const MAX_CALIBRATED_RANGE_CM: f64 = 600.0;

const MIN_SAMPLES: usize = 4;
const MIN_DOMAIN_RATIO: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangeError {
    #[error("need at least {MIN_SAMPLES} calibration samples, got {0}")]
    InsufficientSamples(usize),
    #[error("calibration samples must span a pixel ratio of at least {MIN_DOMAIN_RATIO}, got {0:.3}")]
    NarrowDomain(f64),
    #[error("invalid calibration sample {index}: {reason}")]
    InvalidSample { index: usize, reason: &'static str },
    #[error("fitted polynomial is not strictly decreasing on [{x_min}, {x_max}] px")]
    NonMonotoneFit { x_min: f64, x_max: f64 },
    #[error("least-squares system is singular")]
    Singular,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationSample {
    pub x_px: f64,
    pub y_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RangeCalibration {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub assumed_height_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeEstimate {
    pub range_cm: f64,
    /// The input was outside the calibrated domain and was clamped.
    pub extrapolated: bool,
}

impl RangeCalibration {
    pub fn eval(&self, x: f64) -> f64 {
        (self.k1 * x + self.k2) * x + self.k3
    }

    fn slope(&self, x: f64) -> f64 {
        2.0 * self.k1 * x + self.k2
    }

    /// The derivative is linear in `x`, so negativity at both domain ends
    /// proves strict decrease over the whole domain.
    pub fn is_strictly_decreasing(&self) -> bool {
        self.slope(self.x_min) < 0.0 && self.slope(self.x_max) < 0.0
    }

    /// Shape checks; monotonicity is only enforced by [`fit_calibration`].
    pub fn validate(&self) -> Result<(), RangeError> {
        if ![self.k1, self.k2, self.k3].iter().all(|k| k.is_finite()) {
            return Err(RangeError::InvalidCalibration("coefficients must be finite"));
        }
        if !(self.x_min > 0.0 && self.x_max > self.x_min) {
            return Err(RangeError::InvalidCalibration("x domain must satisfy 0 < x_min < x_max"));
        }
        if !(self.assumed_height_cm > 0.0) {
            return Err(RangeError::InvalidCalibration("assumed height must be positive"));
        }
        Ok(())
    }

    /// Evaluates the range model, clamping `x_px` to the calibrated domain.
    pub fn estimate(&self, x_px: f64) -> RangeEstimate {
        let clamped = x_px.clamp(self.x_min, self.x_max);
        RangeEstimate {
            range_cm: self.eval(clamped),
            extrapolated: clamped != x_px,
        }
    }

    /// Largest deviation from `truth` over `n` evenly spaced points of the
    /// domain (endpoints included).
    pub fn max_abs_error(&self, truth: impl Fn(f64) -> f64, n: usize) -> f64 {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = self.x_min + (self.x_max - self.x_min) * i as f64 / (n - 1) as f64;
                (self.eval(x) - truth(x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn estimate_range(calib: &RangeCalibration, x_px: f64) -> RangeEstimate {
    calib.estimate(x_px)
}

/// Torso (shoulder-to-hip) length for a person of the given height.
pub fn torso_length_cm(height_cm: f64, torso_ratio: f64) -> f64 {
    height_cm * torso_ratio
}

/// Pinhole ground truth: pixel length of a torso of `torso_cm` seen square-on
/// at `range_cm`.
pub fn pinhole_pixels(focal_px: f64, torso_cm: f64, range_cm: f64) -> f64 {
    focal_px * torso_cm / range_cm
}

/// Calibration samples generated by the pinhole model at the given ranges.
pub fn pinhole_samples(
    focal_px: f64,
    torso_cm: f64,
    ranges_cm: impl IntoIterator<Item = f64>,
) -> Vec<CalibrationSample> {
    ranges_cm
        .into_iter()
        .map(|y| CalibrationSample {
            x_px: pinhole_pixels(focal_px, torso_cm, y),
            y_cm: y,
        })
        .collect()
}

/// Least-squares quadratic fit. The regression is solved in a centered and
/// scaled pixel variable and mapped back to raw coefficients.
pub fn fit_calibration(
    samples: &[CalibrationSample],
    assumed_height_cm: f64,
) -> Result<RangeCalibration, RangeError> {
    if samples.len() < MIN_SAMPLES {
        return Err(RangeError::InsufficientSamples(samples.len()));
    }
    for (index, s) in samples.iter().enumerate() {
        if !(s.x_px > 0.0 && s.x_px.is_finite()) {
            return Err(RangeError::InvalidSample {
                index,
                reason: "x_px must be positive",
            });
        }
        if !(0.0..=MAX_CALIBRATED_RANGE_CM).contains(&s.y_cm) {
            return Err(RangeError::InvalidSample {
                index,
                reason: "y_cm must lie in [0, 600]",
            });
        }
    }
    let x_min = samples.iter().map(|s| s.x_px).fold(f64::INFINITY, f64::min);
    let x_max = samples.iter().map(|s| s.x_px).fold(f64::NEG_INFINITY, f64::max);
    let ratio = x_max / x_min;
    if ratio < MIN_DOMAIN_RATIO {
        return Err(RangeError::NarrowDomain(ratio));
    }

    let center = 0.5 * (x_min + x_max);
    let scale = 0.5 * (x_max - x_min);
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for s in samples {
        let t = (s.x_px - center) / scale;
        let row = Vector3::new(1.0, t, t * t);
        ata += row * row.transpose();
        aty += row * s.y_cm;
    }
    let c = ata.lu().solve(&aty).ok_or(RangeError::Singular)?;
    let (c0, c1, c2) = (c[0], c[1], c[2]);
    let calib = RangeCalibration {
        k1: c2 / (scale * scale),
        k2: c1 / scale - 2.0 * c2 * center / (scale * scale),
        k3: c0 - c1 * center / scale + c2 * center * center / (scale * scale),
        x_min,
        x_max,
        assumed_height_cm,
    };
    calib.validate()?;
    if !calib.is_strictly_decreasing() {
        return Err(RangeError::NonMonotoneFit { x_min, x_max });
    }
    Ok(calib)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GuardConfig {
    pub max_closing_speed_cm_s: f64,
    pub hold_duration_s: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            max_closing_speed_cm_s: 300.0,
            hold_duration_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GuardState {
    /// Last accepted estimate and its time stamp.
    pub last: Option<(f64, f64)>,
    pub hold_until_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardOutput {
    pub accepted_cm: f64,
    pub motion_hold: bool,
}

impl GuardState {
    pub fn hold_active(&self, now_s: f64) -> bool {
        self.hold_until_s.is_some_and(|h| now_s < h)
    }
}

/// Rate-limits range estimates. A change faster than
/// `max_closing_speed_cm_s` relative to the last accepted estimate is
/// rejected: the last estimate is kept and a motion hold runs until
/// `now + hold_duration_s`. The reference time only advances on accepted
/// estimates, so a persistent genuine change is eventually accepted.
pub fn guard_range(
    guard: &GuardState,
    new_estimate_cm: f64,
    now_s: f64,
    max_closing_speed_cm_s: f64,
    hold_duration_s: f64,
) -> (GuardOutput, GuardState) {
    let mut next = *guard;
    let Some((last_cm, last_t)) = guard.last else {
        next.last = Some((new_estimate_cm, now_s));
        let out = GuardOutput {
            accepted_cm: new_estimate_cm,
            motion_hold: next.hold_active(now_s),
        };
        return (out, next);
    };
    let elapsed = now_s - last_t;
    let change = (new_estimate_cm - last_cm).abs();
    let too_fast = if elapsed > 0.0 {
        change / elapsed > max_closing_speed_cm_s
    } else {
        change > 0.0
    };
    if too_fast {
        let until = now_s + hold_duration_s;
        next.hold_until_s = Some(guard.hold_until_s.map_or(until, |h| h.max(until)));
        return (
            GuardOutput {
                accepted_cm: last_cm,
                motion_hold: true,
            },
            next,
        );
    }
    next.last = Some((new_estimate_cm, now_s));
    (
        GuardOutput {
            accepted_cm: new_estimate_cm,
            motion_hold: next.hold_active(now_s),
        },
        next,
    )
}
