//! Shared geometric types and the pose-model output contract.
//!
//! World frame: `x` forward, `y` left, `z` up; heading is counter-clockwise
//! from the `x` axis. Image frame: `u` grows to the right, `v` grows downward,
//! origin at the top-left pixel corner. Pixel coordinates are continuous.

use core::f64::consts::{PI, TAU};

use alloc::vec::Vec;
use thiserror::Error;

use crate::identity::Embedding;

/// Number of keypoints emitted by the pose model (COCO-17 layout).
pub const KEYPOINT_COUNT: usize = 17;

/// COCO-17 keypoint indices.
pub mod coco {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const LEFT_EAR: usize = 3;
    pub const RIGHT_EAR: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_ELBOW: usize = 7;
    pub const RIGHT_ELBOW: usize = 8;
    pub const LEFT_WRIST: usize = 9;
    pub const RIGHT_WRIST: usize = 10;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;
    pub const LEFT_KNEE: usize = 13;
    pub const RIGHT_KNEE: usize = 14;
    pub const LEFT_ANKLE: usize = 15;
    pub const RIGHT_ANKLE: usize = 16;

    pub const NAMES: [&str; super::KEYPOINT_COUNT] = [
        "nose",
        "left_eye",
        "right_eye",
        "left_ear",
        "right_ear",
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hip",
        "right_hip",
        "left_knee",
        "right_knee",
        "left_ankle",
        "right_ankle",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KeypointError {
    #[error("keypoint {} ({index}) is not visible", coco::NAMES[*index])]
    Missing { index: usize },
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_heading(heading: f64) -> f64 {
    let mut h = libm::fmod(heading, TAU);
    if h <= -PI {
        h += TAU;
    } else if h > PI {
        h -= TAU;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

impl WorldPose {
    /// Builds a pose with the heading normalized and altitude floored at 0.
    pub fn new(x: f64, y: f64, z: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            z: z.max(0.0),
            heading: normalize_heading(heading),
        }
    }

    /// Horizontal distance to a ground-plane point.
    pub fn ground_distance_to(&self, x: f64, y: f64) -> f64 {
        libm::hypot(x - self.x, y - self.y)
    }
}

/// Body-fixed, forward-looking pinhole camera with square pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CameraModel {
    pub focal_px: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal_px: 700.0,
            center_x: 640.0,
            center_y: 360.0,
            width: 1280.0,
            height: 720.0,
        }
    }
}

/// A point expressed in the camera frame: `forward` is depth along the optical
/// axis, `left` and `up` are lateral offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPoint {
    pub forward: f64,
    pub left: f64,
    pub up: f64,
}

impl CameraModel {
    pub fn image_center(&self) -> PixelPoint {
        PixelPoint::new(self.center_x, self.center_y)
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.u >= 0.0 && p.u < self.width && p.v >= 0.0 && p.v < self.height
    }

    /// Expresses a world point in the frame of a camera mounted at `pose`.
    pub fn to_camera(&self, pose: &WorldPose, world: [f64; 3]) -> CameraPoint {
        let dx = world[0] - pose.x;
        let dy = world[1] - pose.y;
        let (s, c) = libm::sincos(pose.heading);
        CameraPoint {
            forward: dx * c + dy * s,
            left: -dx * s + dy * c,
            up: world[2] - pose.z,
        }
    }

    /// Pinhole projection; `None` when the point is not in front of the camera.
    pub fn project(&self, p: CameraPoint) -> Option<PixelPoint> {
        if p.forward <= 1e-6 {
            return None;
        }
        Some(PixelPoint::new(
            self.center_x - self.focal_px * p.left / p.forward,
            self.center_y - self.focal_px * p.up / p.forward,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn midpoint(self, other: Self) -> Self {
        Self::new((self.u + other.u) * 0.5, (self.v + other.v) * 0.5)
    }

    pub fn distance(self, other: Self) -> f64 {
        libm::hypot(self.u - other.u, self.v - other.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

impl Keypoint {
    pub const fn visible(u: f64, v: f64) -> Self {
        Self { u, v, visible: true }
    }

    pub const fn hidden() -> Self {
        Self {
            u: 0.0,
            v: 0.0,
            visible: false,
        }
    }

    pub fn point(&self) -> PixelPoint {
        PixelPoint::new(self.u, self.v)
    }
}

/// The 17 body keypoints for one person, COCO order.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeypointSet {
    pub points: [Keypoint; KEYPOINT_COUNT],
}

impl Default for KeypointSet {
    fn default() -> Self {
        Self {
            points: [Keypoint::hidden(); KEYPOINT_COUNT],
        }
    }
}

impl KeypointSet {
    fn require(&self, index: usize) -> Result<PixelPoint, KeypointError> {
        let kp = &self.points[index];
        if kp.visible {
            Ok(kp.point())
        } else {
            Err(KeypointError::Missing { index })
        }
    }

    pub fn shoulder_midpoint(&self) -> Result<PixelPoint, KeypointError> {
        let left = self.require(coco::LEFT_SHOULDER)?;
        let right = self.require(coco::RIGHT_SHOULDER)?;
        Ok(left.midpoint(right))
    }

    pub fn hip_midpoint(&self) -> Result<PixelPoint, KeypointError> {
        let left = self.require(coco::LEFT_HIP)?;
        let right = self.require(coco::RIGHT_HIP)?;
        Ok(left.midpoint(right))
    }

    /// Pixel distance between the shoulder midpoint and the hip midpoint. This
    /// is the input of the range model.
    pub fn shoulder_hip_pixel_distance(&self) -> Result<f64, KeypointError> {
        Ok(self.shoulder_midpoint()?.distance(self.hip_midpoint()?))
    }

    /// Shifts every keypoint by `(du, dv)`, visibility unchanged.
    pub fn translated(&self, du: f64, dv: f64) -> Self {
        let mut out = *self;
        for kp in out.points.iter_mut() {
            kp.u += du;
            kp.v += dv;
        }
        out
    }
}

/// Axis-aligned box `(u_min, v_min)`–`(u_max, v_max)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BoundingBox {
    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(
            (self.u_min + self.u_max) * 0.5,
            (self.v_min + self.v_max) * 0.5,
        )
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.u_max > self.u_min && self.v_max > self.v_min)
    }

    pub fn contains_with_margin(&self, p: PixelPoint, margin: f64) -> bool {
        p.u >= self.u_min - margin
            && p.u <= self.u_max + margin
            && p.v >= self.v_min - margin
            && p.v <= self.v_max + margin
    }
}

/// One person detection with a track id that is stable across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedDetection {
    pub track_id: u32,
    pub bbox: BoundingBox,
    pub keypoints: Option<KeypointSet>,
    pub embedding: Option<Embedding>,
}

/// Output of one perception tick, already filtered to the person class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionFrame {
    pub tick: u64,
    pub time_s: f64,
    pub detections: Vec<TrackedDetection>,
}

impl DetectionFrame {
    pub fn find(&self, track_id: u32) -> Option<&TrackedDetection> {
        self.detections.iter().find(|d| d.track_id == track_id)
    }
}

/// Velocity command. `vx`, `vy`, `vz` are normalized to `[-1, 1]`;
/// `yaw_rate` is in rad/s, positive counter-clockwise (turning left).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub yaw_rate: f64,
}

impl VelocityCommand {
    pub const ZERO: Self = Self {
        vx: 0.0,
        vy: 0.0,
        vz: 0.0,
        yaw_rate: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.vz.is_finite() && self.yaw_rate.is_finite()
    }
}
