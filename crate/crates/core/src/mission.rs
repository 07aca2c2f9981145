//! Operator workflow state machine.
//!
//! ```text
//!            start_search                 face match             start_track
//!   Free ─────────────────▶ Search ─────────────────▶ AwaitConfirm ─────────▶ Track
//!    ▲  ◀── go_free (any) ──   ▲   ◀── N misses ───────────┘                  │
//!    │                         │                                               │ N misses
//!    │                         └──── deadline passed ──── Reconfirm ◀──────────┘
//!    │                                                        │ same-label face match
//!    │                                                        └────────────▶ Track
//! ```
//!
//! * `Free`: the operator's manual velocity is passed through (clamped).
//!   `capture_template` stores the embedding of the detection nearest the
//!   crosshair.
//! * `Search`: constant yaw at `search_yaw_rate` (never above `yaw_cap`). The
//!   first matched detection in tick order becomes the target.
//! * `AwaitConfirm`: yaw and vertical centering on the shoulder midpoint,
//!   `vx = 0`, until the operator presses `start_track`.
//! * `Track`: all three controllers; the range estimate passes the lean guard
//!   first and `vx` is forced to 0 while a motion hold is active.
//! * `Reconfirm`: hover and re-run template matching on face ticks. A match
//!   with the locked label resumes tracking; the deadline returns to Search.
//!
//! A tick where the target is missing (no frame, target not detected, or its
//! shoulders not visible) counts as a miss; the previous command is held until
//! `loss_frames` consecutive misses. Buttons that have no meaning in the
//! current mode produce an `IgnoredInput` event and change nothing.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::control::{AxisLimits, ControllerBank};
use crate::geometry::{BoundingBox, CameraModel, DetectionFrame, KeypointError, TrackedDetection, VelocityCommand};
use crate::identity::{Embedding, MatchResult};
use crate::range::{guard_range, GuardConfig, GuardState, RangeCalibration};

/// 45 deg/s.
pub const SEARCH_YAW_CAP: f64 = core::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    #[default]
    Free,
    Search,
    AwaitConfirm,
    Track,
    Reconfirm,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Free,
        Mode::Search,
        Mode::AwaitConfirm,
        Mode::Track,
        Mode::Reconfirm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::Search => "search",
            Mode::AwaitConfirm => "await_confirm",
            Mode::Track => "track",
            Mode::Reconfirm => "reconfirm",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s)
    }

    fn has_target(&self) -> bool {
        matches!(self, Mode::AwaitConfirm | Mode::Track | Mode::Reconfirm)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Button {
    StartSearch,
    StartTrack,
    /// `None` uses the configured default label.
    CaptureTemplate(Option<String>),
    GoFree,
}

impl Button {
    pub fn name(&self) -> &'static str {
        match self {
            Button::StartSearch => "start_search",
            Button::StartTrack => "start_track",
            Button::CaptureTemplate(_) => "capture_template",
            Button::GoFree => "go_free",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatorInput {
    /// Replaces the held manual velocity; used in Free mode only.
    pub manual_velocity: Option<VelocityCommand>,
    pub button: Option<Button>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MissionConfig {
    pub initial_mode: Mode,
    pub track_setpoint_cm: f64,
    /// rad/s, counter-clockwise.
    pub search_yaw_rate: f64,
    pub yaw_cap: f64,
    /// Consecutive missed control ticks before the target counts as lost.
    pub loss_frames: u32,
    pub reconfirm_timeout_s: f64,
    /// Shoulder midpoint within this radius of the crosshair counts as
    /// centered.
    pub centering_tolerance_px: f64,
    /// Manual capture picks the detection whose box center is nearest the
    /// crosshair, within this radius.
    pub capture_radius_px: f64,
    /// How old the cached face embeddings may be for a manual capture.
    pub capture_max_age_s: f64,
    /// Only templates with this label are searched for; any label when unset.
    pub target_label: Option<String>,
    pub default_capture_label: String,
    pub guard: GuardConfig,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            initial_mode: Mode::Free,
            track_setpoint_cm: 200.0,
            search_yaw_rate: 0.5,
            yaw_cap: SEARCH_YAW_CAP,
            loss_frames: 15,
            reconfirm_timeout_s: 10.0,
            centering_tolerance_px: 40.0,
            capture_radius_px: 200.0,
            capture_max_age_s: 0.5,
            target_label: None,
            default_capture_label: String::from("target"),
            guard: GuardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MissionEvent {
    ModeChanged { from: Mode, to: Mode },
    TargetFound { track_id: u32, label: String, distance: f64 },
    TargetCentered { track_id: u32 },
    TargetLost { track_id: u32 },
    Reacquired { track_id: u32, label: String },
    ReconfirmTimeout,
    MotionHold { until_s: f64 },
    TemplateCaptured { label: String, track_id: u32 },
    CaptureFailed,
    IgnoredInput { button: &'static str, mode: Mode },
}

impl MissionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            MissionEvent::ModeChanged { .. } => "mode_changed",
            MissionEvent::TargetFound { .. } => "target_found",
            MissionEvent::TargetCentered { .. } => "target_centered",
            MissionEvent::TargetLost { .. } => "target_lost",
            MissionEvent::Reacquired { .. } => "reacquired",
            MissionEvent::ReconfirmTimeout => "reconfirm_timeout",
            MissionEvent::MotionHold { .. } => "motion_hold",
            MissionEvent::TemplateCaptured { .. } => "template_captured",
            MissionEvent::CaptureFailed => "capture_failed",
            MissionEvent::IgnoredInput { .. } => "ignored_input",
        }
    }
}

impl fmt::Display for MissionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissionEvent::ModeChanged { from, to } => write!(f, "mode_changed(from={from},to={to})"),
            MissionEvent::TargetFound {
                track_id,
                label,
                distance,
            } => write!(f, "target_found(track={track_id},label={label},d={distance:.4})"),
            MissionEvent::TargetCentered { track_id } => write!(f, "target_centered(track={track_id})"),
            MissionEvent::TargetLost { track_id } => write!(f, "target_lost(track={track_id})"),
            MissionEvent::Reacquired { track_id, label } => {
                write!(f, "reacquired(track={track_id},label={label})")
            }
            MissionEvent::ReconfirmTimeout => f.write_str("reconfirm_timeout"),
            MissionEvent::MotionHold { until_s } => write!(f, "motion_hold(until={until_s:.4})"),
            MissionEvent::TemplateCaptured { label, track_id } => {
                write!(f, "template_captured(label={label},track={track_id})")
            }
            MissionEvent::CaptureFailed => f.write_str("capture_failed"),
            MissionEvent::IgnoredInput { button, mode } => {
                write!(f, "ignored_input(button={button},mode={mode})")
            }
        }
    }
}

/// Face recognition result for one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMatch {
    pub track_id: u32,
    pub result: MatchResult,
}

#[derive(Debug, Clone, Copy)]
pub struct MissionInput<'a> {
    /// The perception frame of this control tick; `None` for a dropped frame.
    pub detections: Option<&'a DetectionFrame>,
    /// Present only on face-recognition ticks.
    pub face_matches: Option<&'a [FaceMatch]>,
    pub now_s: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissionOutput {
    pub command: VelocityCommand,
    pub events: Vec<MissionEvent>,
    /// Template to store in the registry.
    pub capture: Option<(String, Embedding)>,
    /// Guarded range estimate used by the forward controller.
    pub range_est_cm: Option<f64>,
    pub motion_hold: bool,
    /// Shoulder midpoint minus image center.
    pub centering_error_px: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionState {
    pub mode: Mode,
    pub target_track_id: Option<u32>,
    pub target_label: Option<String>,
    pub consecutive_misses: u32,
    pub controller_bank: ControllerBank,
    pub guard: GuardState,
    pub reconfirm_deadline: Option<f64>,
    /// Held manual velocity.
    pub manual: VelocityCommand,
    pub last_command: VelocityCommand,
    /// Time of the last control update with a valid target measurement.
    pub last_measurement_s: Option<f64>,
    pub centered_reported: bool,
    /// Embeddings seen on the latest face tick.
    pub face_cache: Vec<(u32, BoundingBox, Embedding)>,
    pub face_cache_time: f64,
}

impl MissionState {
    pub fn new(mode: Mode, bank: ControllerBank) -> Self {
        Self {
            mode,
            target_track_id: None,
            target_label: None,
            consecutive_misses: 0,
            controller_bank: bank,
            guard: GuardState::default(),
            reconfirm_deadline: None,
            manual: VelocityCommand::ZERO,
            last_command: VelocityCommand::ZERO,
            last_measurement_s: None,
            centered_reported: false,
            face_cache: Vec::new(),
            face_cache_time: f64::NEG_INFINITY,
        }
    }
}

/// Shoulder midpoint minus image center, `(horizontal, vertical)` in pixels.
/// Positive horizontal is right of the crosshair, positive vertical is below.
pub fn centering_error(
    detection: &TrackedDetection,
    camera: &CameraModel,
) -> Result<(f64, f64), KeypointError> {
    let kps = detection.keypoints.as_ref().ok_or(KeypointError::Missing {
        index: crate::geometry::coco::LEFT_SHOULDER,
    })?;
    let mid = kps.shoulder_midpoint()?;
    Ok((mid.u - camera.center_x, mid.v - camera.center_y))
}

/// The mission layer: configuration, sensor models and the stepped state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub config: MissionConfig,
    pub camera: CameraModel,
    pub calibration: RangeCalibration,
    /// Bounds for manual lateral velocity.
    pub manual_vy_limits: AxisLimits,
    pub state: MissionState,
}

struct Measurement {
    horiz: f64,
    vert: f64,
    shoulder_hip_px: Option<f64>,
}

impl Mission {
    pub fn new(config: MissionConfig, camera: CameraModel, calibration: RangeCalibration, bank: ControllerBank) -> Self {
        let state = MissionState::new(config.initial_mode, bank);
        Self {
            config,
            camera,
            calibration,
            manual_vy_limits: AxisLimits::symmetric(1.0, f64::INFINITY),
            state,
        }
    }

    pub fn mode(&self) -> Mode {
        self.state.mode
    }

    fn set_mode(&mut self, to: Mode, events: &mut Vec<MissionEvent>) {
        let from = self.state.mode;
        if from == to {
            return;
        }
        self.state.mode = to;
        self.state.consecutive_misses = 0;
        self.state.centered_reported = false;
        self.state.last_measurement_s = None;
        self.state.controller_bank.reset();
        if !to.has_target() {
            self.state.target_track_id = None;
            self.state.target_label = None;
        }
        if to != Mode::Reconfirm {
            self.state.reconfirm_deadline = None;
        }
        if to == Mode::Track {
            self.state.guard = GuardState::default();
        }
        events.push(MissionEvent::ModeChanged { from, to });
    }

    fn handle_button(&mut self, button: &Button, input: &MissionInput<'_>, out: &mut MissionOutput) {
        let mode = self.state.mode;
        match (mode, button) {
            (Mode::Free, Button::StartSearch) => self.set_mode(Mode::Search, &mut out.events),
            (Mode::Free, Button::CaptureTemplate(label)) => self.capture(label.as_deref(), input.now_s, out),
            (Mode::AwaitConfirm, Button::StartTrack) => self.set_mode(Mode::Track, &mut out.events),
            (Mode::Search | Mode::AwaitConfirm | Mode::Track | Mode::Reconfirm, Button::GoFree) => {
                self.state.manual = VelocityCommand::ZERO;
                self.set_mode(Mode::Free, &mut out.events)
            }
            _ => out.events.push(MissionEvent::IgnoredInput {
                button: button.name(),
                mode,
            }),
        }
    }

    fn capture(&mut self, label: Option<&str>, now_s: f64, out: &mut MissionOutput) {
        let center = self.camera.image_center();
        let fresh = now_s - self.state.face_cache_time <= self.config.capture_max_age_s;
        let best = self
            .state
            .face_cache
            .iter()
            .filter(|_| fresh)
            .map(|(id, bbox, emb)| (id, emb, bbox.center().distance(center)))
            .filter(|(_, _, d)| *d <= self.config.capture_radius_px)
            .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(b.0)));
        match best {
            Some((&track_id, emb, _)) => {
                let label = String::from(label.unwrap_or(&self.config.default_capture_label));
                out.events.push(MissionEvent::TemplateCaptured {
                    label: label.clone(),
                    track_id,
                });
                out.capture = Some((label, emb.clone()));
            }
            None => out.events.push(MissionEvent::CaptureFailed),
        }
    }

    fn label_wanted(&self, label: &str) -> bool {
        match self.state.mode {
            Mode::Reconfirm => self.state.target_label.as_deref() == Some(label),
            _ => self.config.target_label.as_deref().is_none_or(|want| want == label),
        }
    }

    fn first_wanted_match<'m>(&self, matches: Option<&'m [FaceMatch]>) -> Option<&'m FaceMatch> {
        matches?
            .iter()
            .find(|m| m.result.matched && self.label_wanted(&m.result.label))
    }

    fn measure(&self, frame: Option<&DetectionFrame>) -> Option<Measurement> {
        let det = frame?.find(self.state.target_track_id?)?;
        let (horiz, vert) = centering_error(det, &self.camera).ok()?;
        let shoulder_hip_px = det
            .keypoints
            .as_ref()
            .and_then(|k| k.shoulder_hip_pixel_distance().ok());
        Some(Measurement {
            horiz,
            vert,
            shoulder_hip_px,
        })
    }

    /// Counts a miss, returns true when the target is now lost.
    fn register_miss(&mut self) -> bool {
        self.state.consecutive_misses += 1;
        self.state.consecutive_misses >= self.config.loss_frames
    }

    fn measurement_dt(&self, input: &MissionInput<'_>) -> f64 {
        match self.state.last_measurement_s {
            Some(t) if input.now_s > t => input.now_s - t,
            _ => input.dt,
        }
    }

    pub fn step(&mut self, operator: OperatorInput, input: MissionInput<'_>) -> MissionOutput {
        let mut out = MissionOutput::default();

        if let Some(frame) = input.detections {
            if input.face_matches.is_some() || frame.detections.iter().any(|d| d.embedding.is_some()) {
                let cache: Vec<_> = frame
                    .detections
                    .iter()
                    .filter_map(|d| d.embedding.clone().map(|e| (d.track_id, d.bbox, e)))
                    .collect();
                if !cache.is_empty() {
                    self.state.face_cache = cache;
                    self.state.face_cache_time = input.now_s;
                }
            }
        }
        if let Some(manual) = operator.manual_velocity {
            self.state.manual = manual;
        }
        if let Some(button) = &operator.button {
            self.handle_button(button, &input, &mut out);
        }

        out.command = match self.state.mode {
            Mode::Free => self.free_command(),
            Mode::Search => self.search(&input, &mut out),
            Mode::AwaitConfirm => self.await_confirm(&input, &mut out),
            Mode::Track => self.track(&input, &mut out),
            Mode::Reconfirm => self.reconfirm(&input, &mut out),
        };
        self.state.last_command = out.command;
        out
    }

    fn free_command(&self) -> VelocityCommand {
        let bank = &self.state.controller_bank;
        let m = self.state.manual;
        VelocityCommand {
            vx: bank.x_axis.limits.clamp(m.vx),
            vy: self.manual_vy_limits.clamp(m.vy),
            vz: bank.z_axis.limits.clamp(m.vz),
            yaw_rate: bank.yaw_axis.limits.clamp(m.yaw_rate),
        }
    }

    fn search_command(&self) -> VelocityCommand {
        let rate = self
            .config
            .search_yaw_rate
            .clamp(-self.config.yaw_cap, self.config.yaw_cap);
        VelocityCommand {
            yaw_rate: self.state.controller_bank.yaw_axis.limits.clamp(rate),
            ..VelocityCommand::ZERO
        }
    }

    fn search(&mut self, input: &MissionInput<'_>, out: &mut MissionOutput) -> VelocityCommand {
        let Some(found) = self.first_wanted_match(input.face_matches).cloned() else {
            return self.search_command();
        };
        self.set_mode(Mode::AwaitConfirm, &mut out.events);
        self.state.target_track_id = Some(found.track_id);
        self.state.target_label = Some(found.result.label.clone());
        out.events.push(MissionEvent::TargetFound {
            track_id: found.track_id,
            label: found.result.label,
            distance: found.result.distance,
        });
        self.await_confirm(input, out)
    }

    fn await_confirm(&mut self, input: &MissionInput<'_>, out: &mut MissionOutput) -> VelocityCommand {
        let Some(m) = self.measure(input.detections) else {
            if self.register_miss() {
                let track_id = self.state.target_track_id.unwrap_or_default();
                out.events.push(MissionEvent::TargetLost { track_id });
                self.set_mode(Mode::Search, &mut out.events);
                return self.search_command();
            }
            return self.state.last_command;
        };
        self.state.consecutive_misses = 0;
        let dt = self.measurement_dt(input);
        self.state.last_measurement_s = Some(input.now_s);
        out.centering_error_px = Some((m.horiz, m.vert));
        let radius = libm::hypot(m.horiz, m.vert);
        if radius <= self.config.centering_tolerance_px && !self.state.centered_reported {
            self.state.centered_reported = true;
            out.events.push(MissionEvent::TargetCentered {
                track_id: self.state.target_track_id.unwrap_or_default(),
            });
        }
        self.state.controller_bank.step_centering(m.horiz, m.vert, dt)
    }

    fn track(&mut self, input: &MissionInput<'_>, out: &mut MissionOutput) -> VelocityCommand {
        let Some(m) = self.measure(input.detections) else {
            if self.register_miss() {
                let track_id = self.state.target_track_id.unwrap_or_default();
                out.events.push(MissionEvent::TargetLost { track_id });
                self.set_mode(Mode::Reconfirm, &mut out.events);
                self.state.reconfirm_deadline = Some(input.now_s + self.config.reconfirm_timeout_s);
                return VelocityCommand::ZERO;
            }
            out.motion_hold = self.state.guard.hold_active(input.now_s);
            let mut held = self.state.last_command;
            if out.motion_hold {
                held.vx = 0.0;
            }
            return held;
        };
        self.state.consecutive_misses = 0;
        let dt = self.measurement_dt(input);
        self.state.last_measurement_s = Some(input.now_s);
        out.centering_error_px = Some((m.horiz, m.vert));

        let guard_cfg = self.config.guard;
        let range = m.shoulder_hip_px.map(|x| {
            let raw = self.calibration.estimate(x).range_cm;
            let was_holding = self.state.guard.hold_active(input.now_s);
            let (g, next) = guard_range(
                &self.state.guard,
                raw,
                input.now_s,
                guard_cfg.max_closing_speed_cm_s,
                guard_cfg.hold_duration_s,
            );
            if g.motion_hold && !was_holding {
                out.events.push(MissionEvent::MotionHold {
                    until_s: next.hold_until_s.unwrap_or(input.now_s),
                });
            }
            self.state.guard = next;
            g
        });
        out.motion_hold = self.state.guard.hold_active(input.now_s);

        let bank = &mut self.state.controller_bank;
        let mut cmd = match range {
            Some(g) => {
                out.range_est_cm = Some(g.accepted_cm);
                bank.step(g.accepted_cm - self.config.track_setpoint_cm, m.horiz, m.vert, dt)
            }
            None => bank.step_centering(m.horiz, m.vert, dt),
        };
        if out.motion_hold {
            cmd.vx = 0.0;
            bank.x_axis.force_output(0.0);
        }
        cmd
    }

    fn reconfirm(&mut self, input: &MissionInput<'_>, out: &mut MissionOutput) -> VelocityCommand {
        if let Some(found) = self.first_wanted_match(input.face_matches).cloned() {
            self.set_mode(Mode::Track, &mut out.events);
            self.state.target_track_id = Some(found.track_id);
            out.events.push(MissionEvent::Reacquired {
                track_id: found.track_id,
                label: found.result.label,
            });
            return self.track(input, out);
        }
        if self.state.reconfirm_deadline.is_some_and(|d| input.now_s >= d) {
            out.events.push(MissionEvent::ReconfirmTimeout);
            self.set_mode(Mode::Search, &mut out.events);
            return self.search_command();
        }
        VelocityCommand::ZERO
    }
}
