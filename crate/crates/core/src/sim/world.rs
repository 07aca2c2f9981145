//! Scripted people.

use alloc::vec::Vec;

use crate::geometry::normalize_heading;
use crate::identity::{Embedding, EMBEDDING_DIM};
use rand::Rng;
use rand_distr::StandardNormal;

/// Norm of a person's true embedding. Random directions at this norm sit
/// about 0.92 apart, well above the match threshold.
pub const TRUTH_EMBEDDING_NORM: f64 = 0.65;

/// A waypoint: the person is at `(x, y)` at time `t`. `heading` (radians,
/// world frame) sets the facing direction while standing; walking always
/// faces the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Keyframe {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub heading: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptError {
    Empty,
    /// Keyframe `index` is not strictly after its predecessor, or not finite.
    Unordered { index: usize },
}

/// Piecewise-linear motion through keyframes; the person stands still before
/// the first and after the last keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    keyframes: Vec<Keyframe>,
    /// Facing direction at each keyframe.
    headings: Vec<f64>,
}

const STILL_EPS: f64 = 1e-9;

fn direction(a: &Keyframe, b: &Keyframe) -> Option<f64> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (libm::hypot(dx, dy) > STILL_EPS).then(|| libm::atan2(dy, dx))
}

impl MotionScript {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self, ScriptError> {
        if keyframes.is_empty() {
            return Err(ScriptError::Empty);
        }
        for (index, k) in keyframes.iter().enumerate() {
            let finite = k.t.is_finite() && k.x.is_finite() && k.y.is_finite() && k.heading.is_none_or(f64::is_finite);
            if !finite || (index > 0 && k.t <= keyframes[index - 1].t) {
                return Err(ScriptError::Unordered { index });
            }
        }
        let mut headings: Vec<f64> = Vec::with_capacity(keyframes.len());
        for (i, k) in keyframes.iter().enumerate() {
            let h = match (k.heading, i) {
                (Some(h), _) => h,
                (None, 0) => keyframes
                    .windows(2)
                    .find_map(|w| direction(&w[0], &w[1]))
                    .unwrap_or(0.0),
                (None, _) => direction(&keyframes[i - 1], k).unwrap_or(headings[i - 1]),
            };
            headings.push(normalize_heading(h));
        }
        Ok(Self { keyframes, headings })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn pose_at(&self, t: f64) -> PersonPose {
        let kf = &self.keyframes;
        let first = &kf[0];
        if t <= first.t {
            return PersonPose {
                x: first.x,
                y: first.y,
                heading: self.headings[0],
            };
        }
        let last = kf.len() - 1;
        if t >= kf[last].t {
            return PersonPose {
                x: kf[last].x,
                y: kf[last].y,
                heading: self.headings[last],
            };
        }
        // Segment i covers [t_i, t_{i+1}).
        let i = kf.partition_point(|k| k.t <= t) - 1;
        let (a, b) = (&kf[i], &kf[i + 1]);
        let s = (t - a.t) / (b.t - a.t);
        PersonPose {
            x: a.x + s * (b.x - a.x),
            y: a.y + s * (b.y - a.y),
            heading: direction(a, b).unwrap_or(self.headings[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub id: u32,
    pub height_cm: f64,
    pub embedding_truth: Embedding,
    pub script: MotionScript,
}

/// Random direction scaled to [`TRUTH_EMBEDDING_NORM`].
pub fn random_truth_embedding<R: Rng + ?Sized>(rng: &mut R) -> Embedding {
    let mut v = [0.0; EMBEDDING_DIM];
    for x in v.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    for x in v.iter_mut() {
        *x *= TRUTH_EMBEDDING_NORM / norm;
    }
    Embedding::new(v).expect("normalized gaussian is finite")
}

/// Adds isotropic Gaussian noise whose expected norm is `sigma`.
pub fn noisy_embedding<R: Rng + ?Sized>(truth: &Embedding, sigma: f64, rng: &mut R) -> Embedding {
    let per_component = sigma / libm::sqrt(EMBEDDING_DIM as f64);
    let mut noise = [0.0; EMBEDDING_DIM];
    for x in noise.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *x = per_component * n;
    }
    truth.add_unchecked(&noise)
}

/// A temporary change of the visible torso length, e.g. the person bends
/// down. `torso_scale` multiplies the shoulder-hip distance.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PostureEvent {
    pub person: u32,
    pub t: f64,
    pub duration_s: f64,
    pub torso_scale: f64,
}

impl PostureEvent {
    pub fn active(&self, person: u32, t: f64) -> bool {
        self.person == person && t >= self.t && t < self.t + self.duration_s
    }
}

/// Torso scale of `person` at time `t`; overlapping events multiply.
pub fn torso_scale_at(events: &[PostureEvent], person: u32, t: f64) -> f64 {
    events
        .iter()
        .filter(|e| e.active(person, t))
        .map(|e| e.torso_scale)
        .product()
}
