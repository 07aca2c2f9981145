//! Synthetic person detector, pose estimator and face embedder.
//!
//! People are rendered as fixed anthropometric skeletons scaled by height and
//! projected through the pinhole camera. Detections carry keypoints only on
//! pose ticks and embeddings only on face ticks, when the face is turned
//! towards the camera.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{
    coco, normalize_heading, BoundingBox, CameraModel, DetectionFrame, Keypoint, KeypointSet, PixelPoint,
    TrackedDetection, WorldPose, KEYPOINT_COUNT,
};
use crate::identity::Embedding;
use crate::range::DEFAULT_TORSO_RATIO;
use crate::sim::world::noisy_embedding;

/// Hip joint height as a fraction of body height.
const HIP_HEIGHT: f64 = 0.53;

/// Keypoint offsets as fractions of body height: `(forward, left, up)` in
/// the person's frame. Shoulder heights are placed at run time from the
/// torso ratio; the table value is ignored for them.
const SKELETON: [(f64, f64, f64); KEYPOINT_COUNT] = [
    (0.045, 0.0, 0.935),   // nose
    (0.035, 0.025, 0.955), // left eye
    (0.035, -0.025, 0.955),
    (0.0, 0.06, 0.945), // left ear
    (0.0, -0.06, 0.945),
    (0.0, 0.13, 0.0), // left shoulder
    (0.0, -0.13, 0.0),
    (0.0, 0.16, 0.63), // left elbow
    (0.0, -0.16, 0.63),
    (0.0, 0.17, 0.485), // left wrist
    (0.0, -0.17, 0.485),
    (0.0, 0.085, HIP_HEIGHT), // left hip
    (0.0, -0.085, HIP_HEIGHT),
    (0.0, 0.08, 0.285), // left knee
    (0.0, -0.08, 0.285),
    (0.0, 0.08, 0.045), // left ankle
    (0.0, -0.08, 0.045),
];

/// Start and length of a scripted perception outage.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Blackout {
    pub start_s: f64,
    pub duration_s: f64,
}

impl Blackout {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.start_s + self.duration_s
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PerceptionConfig {
    pub detect_rate_hz: u32,
    pub pose_rate_hz: u32,
    pub face_rate_hz: u32,
    pub control_rate_hz: u32,
    pub pixel_noise_sigma: f64,
    /// Expected norm of the embedding noise vector.
    pub embedding_noise_sigma: f64,
    pub glitch_prob: f64,
    /// Radians.
    pub face_visibility_half_angle: f64,
    pub torso_ratio: f64,
    pub bbox_margin_px: f64,
    pub blackouts: Vec<Blackout>,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            detect_rate_hz: 30,
            pose_rate_hz: 15,
            face_rate_hz: 5,
            control_rate_hz: 15,
            pixel_noise_sigma: 1.0,
            embedding_noise_sigma: 0.15,
            glitch_prob: 0.0,
            face_visibility_half_angle: core::f64::consts::FRAC_PI_3,
            torso_ratio: DEFAULT_TORSO_RATIO,
            bbox_margin_px: 8.0,
            blackouts: Vec::new(),
        }
    }
}

/// Ground truth for one person at render time.
#[derive(Debug, Clone, Copy)]
pub struct PersonSnapshot<'a> {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub height_cm: f64,
    /// Multiplies the shoulder-hip length (1 when standing upright).
    pub torso_scale: f64,
    pub embedding: &'a Embedding,
}

/// Independent random streams, so changing one noise source does not shift
/// the others.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionRng {
    pub glitch: ChaCha8Rng,
    pub pixel: ChaCha8Rng,
    pub embedding: ChaCha8Rng,
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl PerceptionRng {
    pub fn new(seed: u64) -> Self {
        Self {
            glitch: stream(seed, 1),
            pixel: stream(seed, 2),
            embedding: stream(seed, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderTick {
    pub tick: u64,
    pub pose: bool,
    pub face: bool,
}

/// World position of every keypoint, plus the head top and the ground point
/// that bound the silhouette.
pub fn skeleton_world(p: &PersonSnapshot<'_>, torso_ratio: f64) -> ([[f64; 3]; KEYPOINT_COUNT], [[f64; 3]; 2]) {
    let h = p.height_cm / 100.0;
    let (s, c) = libm::sincos(p.heading);
    let shoulder_up = HIP_HEIGHT + torso_ratio;
    let hip_up = shoulder_up - torso_ratio * p.torso_scale;
    let place = |fwd: f64, left: f64, up: f64| [p.x + h * (fwd * c - left * s), p.y + h * (fwd * s + left * c), h * up];
    let mut out = [[0.0; 3]; KEYPOINT_COUNT];
    for (i, &(fwd, left, up)) in SKELETON.iter().enumerate() {
        let up = match i {
            coco::LEFT_SHOULDER | coco::RIGHT_SHOULDER => shoulder_up,
            coco::LEFT_HIP | coco::RIGHT_HIP => hip_up,
            _ => up,
        };
        out[i] = place(fwd, left, up);
    }
    (out, [place(0.0, 0.0, 1.0), place(0.0, 0.0, 0.0)])
}

/// Whether the person's face is turned towards a camera at `uav`.
pub fn face_visible(p: &PersonSnapshot<'_>, uav: &WorldPose, half_angle: f64) -> bool {
    let to_camera = libm::atan2(uav.y - p.y, uav.x - p.x);
    normalize_heading(to_camera - p.heading).abs() <= half_angle
}

fn render_person(
    p: &PersonSnapshot<'_>,
    uav: &WorldPose,
    camera: &CameraModel,
    config: &PerceptionConfig,
    rng: &mut PerceptionRng,
    tick: RenderTick,
) -> Option<TrackedDetection> {
    let (joints, extents) = skeleton_world(p, config.torso_ratio);
    let center = camera.to_camera(uav, [p.x, p.y, uav.z]);
    // Pixel noise is drawn for every joint of every person so that the stream
    // position does not depend on geometry.
    let mut noise = [(0.0, 0.0); KEYPOINT_COUNT];
    for n in noise.iter_mut() {
        let du: f64 = rng.pixel.sample(StandardNormal);
        let dv: f64 = rng.pixel.sample(StandardNormal);
        *n = (config.pixel_noise_sigma * du, config.pixel_noise_sigma * dv);
    }
    if center.forward <= 0.2 {
        return None;
    }

    let mut keypoints = KeypointSet::default();
    let mut lo = PixelPoint::new(f64::INFINITY, f64::INFINITY);
    let mut hi = PixelPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |q: PixelPoint| {
        lo = PixelPoint::new(lo.u.min(q.u), lo.v.min(q.v));
        hi = PixelPoint::new(hi.u.max(q.u), hi.v.max(q.v));
    };
    for (i, w) in joints.iter().enumerate() {
        if let Some(q) = camera.project(camera.to_camera(uav, *w)) {
            let q = PixelPoint::new(q.u + noise[i].0, q.v + noise[i].1);
            grow(q);
            if camera.contains(q) {
                keypoints.points[i] = Keypoint::visible(q.u, q.v);
            }
        }
    }
    for w in extents {
        if let Some(q) = camera.project(camera.to_camera(uav, w)) {
            grow(q);
        }
    }
    let m = config.bbox_margin_px;
    let bbox = BoundingBox {
        u_min: (lo.u - m).clamp(0.0, camera.width),
        v_min: (lo.v - m).clamp(0.0, camera.height),
        u_max: (hi.u + m).clamp(0.0, camera.width),
        v_max: (hi.v + m).clamp(0.0, camera.height),
    };
    if bbox.is_degenerate() || !keypoints.points.iter().any(|k| k.visible) {
        return None;
    }

    let embedding = (tick.face
        && keypoints.points[coco::NOSE].visible
        && face_visible(p, uav, config.face_visibility_half_angle))
    .then(|| noisy_embedding(p.embedding, config.embedding_noise_sigma, &mut rng.embedding));

    Some(TrackedDetection {
        track_id: p.id,
        bbox,
        keypoints: tick.pose.then_some(keypoints),
        embedding,
    })
}

/// Renders one detection tick. Returns `None` for a dropped frame (random
/// glitch or scripted blackout). Detections are sorted by track id.
pub fn render_perception(
    people: &[PersonSnapshot<'_>],
    uav: &WorldPose,
    camera: &CameraModel,
    config: &PerceptionConfig,
    rng: &mut PerceptionRng,
    tick: RenderTick,
    time_s: f64,
) -> Option<DetectionFrame> {
    let glitch = rng.glitch.random::<f64>() < config.glitch_prob;
    if glitch || config.blackouts.iter().any(|b| b.contains(time_s)) {
        return None;
    }
    let mut detections: Vec<TrackedDetection> = people
        .iter()
        .filter_map(|p| render_person(p, uav, camera, config, rng, tick))
        .collect();
    detections.sort_by_key(|d| d.track_id);
    Some(DetectionFrame {
        tick: tick.tick,
        time_s,
        detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn quiet() -> PerceptionConfig {
        PerceptionConfig {
            pixel_noise_sigma: 0.0,
            embedding_noise_sigma: 0.0,
            ..PerceptionConfig::default()
        }
    }

    fn person(x: f64, y: f64, heading: f64, e: &Embedding) -> PersonSnapshot<'_> {
        PersonSnapshot {
            id: 4,
            x,
            y,
            heading,
            height_cm: 180.0,
            torso_scale: 1.0,
            embedding: e,
        }
    }

    const ALL: RenderTick = RenderTick {
        tick: 0,
        pose: true,
        face: true,
    };

    #[test]
    fn on_axis_torso_matches_pinhole() {
        let e = Embedding::zeros();
        let uav = WorldPose::new(0.0, 0.0, 1.3, 0.0);
        let f = render_perception(
            &[person(2.0, 0.0, PI, &e)],
            &uav,
            &CameraModel::default(),
            &quiet(),
            &mut PerceptionRng::new(1),
            ALL,
            0.0,
        )
        .unwrap();
        let d = &f.detections[0];
        let x = d.keypoints.unwrap().shoulder_hip_pixel_distance().unwrap();
        // Oracle: x = f L / d with L = 0.28 * 180 cm.
        assert!((x - 700.0 * 0.504 / 2.0).abs() < 1e-9, "{x}");
        assert!((x - 176.4).abs() < 1e-9);
        let mid = d.keypoints.unwrap().shoulder_midpoint().unwrap();
        assert!((mid.u - 640.0).abs() < 1e-9);
        assert!(d.embedding.is_some());
        assert_eq!(d.track_id, 4);
    }

    #[test]
    fn person_behind_is_culled() {
        let e = Embedding::zeros();
        let uav = WorldPose::new(0.0, 0.0, 1.3, 0.0);
        let f = render_perception(
            &[person(-2.0, 0.0, 0.0, &e)],
            &uav,
            &CameraModel::default(),
            &quiet(),
            &mut PerceptionRng::new(1),
            ALL,
            0.0,
        )
        .unwrap();
        assert!(f.detections.is_empty());
    }

    #[test]
    fn glitch_one_drops_everything() {
        let e = Embedding::zeros();
        let cfg = PerceptionConfig {
            glitch_prob: 1.0,
            ..quiet()
        };
        let mut rng = PerceptionRng::new(9);
        for k in 0..100 {
            let tick = RenderTick { tick: k, ..ALL };
            assert!(render_perception(
                &[person(2.0, 0.0, PI, &e)],
                &WorldPose::default(),
                &CameraModel::default(),
                &cfg,
                &mut rng,
                tick,
                0.0
            )
            .is_none());
        }
    }

    #[test]
    fn blackout_window() {
        let cfg = PerceptionConfig {
            blackouts: alloc::vec![Blackout {
                start_s: 1.0,
                duration_s: 0.5
            }],
            ..quiet()
        };
        let mut rng = PerceptionRng::new(9);
        let cam = CameraModel::default();
        let uav = WorldPose::default();
        assert!(render_perception(&[], &uav, &cam, &cfg, &mut rng, ALL, 0.99).is_some());
        assert!(render_perception(&[], &uav, &cam, &cfg, &mut rng, ALL, 1.0).is_none());
        assert!(render_perception(&[], &uav, &cam, &cfg, &mut rng, ALL, 1.5).is_some());
    }

    #[test]
    fn face_gate() {
        let e = Embedding::zeros();
        let uav = WorldPose::new(0.0, 0.0, 1.3, 0.0);
        let cam = CameraModel::default();
        for (heading, expect) in [(PI, true), (PI - 1.0, true), (PI - 1.1, false), (0.0, false)] {
            let f = render_perception(
                &[person(2.0, 0.0, heading, &e)],
                &uav,
                &cam,
                &quiet(),
                &mut PerceptionRng::new(1),
                ALL,
                0.0,
            )
            .unwrap();
            assert_eq!(f.detections[0].embedding.is_some(), expect, "heading {heading}");
        }
        // Outside pose and face ticks only the box is reported.
        let f = render_perception(
            &[person(2.0, 0.0, PI, &e)],
            &uav,
            &cam,
            &quiet(),
            &mut PerceptionRng::new(1),
            RenderTick::default(),
            0.0,
        )
        .unwrap();
        assert!(f.detections[0].keypoints.is_none() && f.detections[0].embedding.is_none());
    }

    #[test]
    fn visible_keypoints_lie_inside_image_and_box() {
        let e = Embedding::zeros();
        let cam = CameraModel::default();
        let cfg = PerceptionConfig {
            pixel_noise_sigma: 3.0,
            ..PerceptionConfig::default()
        };
        let mut rng = PerceptionRng::new(5);
        for k in 0..200 {
            let a = k as f64 * 0.05;
            let p = person(0.8 + 0.03 * k as f64, libm::sin(a) * 2.0, a, &e);
            let uav = WorldPose::new(0.0, 0.0, 0.5 + 0.01 * k as f64, 0.2 * libm::cos(a));
            let Some(f) = render_perception(&[p], &uav, &cam, &cfg, &mut rng, ALL, 0.0) else {
                continue;
            };
            for d in &f.detections {
                assert!(!d.bbox.is_degenerate());
                for kp in d.keypoints.unwrap().points.iter().filter(|k| k.visible) {
                    assert!(cam.contains(kp.point()));
                    assert!(d.bbox.contains_with_margin(kp.point(), 1e-9));
                }
            }
        }
    }

    #[test]
    fn posture_shrinks_torso() {
        let e = Embedding::zeros();
        let uav = WorldPose::new(0.0, 0.0, 1.3, 0.0);
        let mut p = person(2.0, 0.0, PI, &e);
        p.torso_scale = 0.6;
        let f = render_perception(&[p], &uav, &CameraModel::default(), &quiet(), &mut PerceptionRng::new(1), ALL, 0.0)
            .unwrap();
        let x = f.detections[0].keypoints.unwrap().shoulder_hip_pixel_distance().unwrap();
        assert!((x - 0.6 * 176.4).abs() < 1e-9);
    }
}
