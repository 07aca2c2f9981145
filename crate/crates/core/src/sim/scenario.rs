//! Declarative scenario description and its validation.
//!
//! Every field has a default, so a scenario only lists what it changes.
//! Validation reports the first problem with the path of the offending field,
//! e.g. `people[1].script[2].t`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::control::{error_rate_model, tune_pd, AxisController, AxisLimits, ControllerBank, PDGains};
use crate::geometry::{CameraModel, VelocityCommand, WorldPose};
use crate::mission::{Button, MissionConfig, Mode};
use crate::range::{fit_calibration, pinhole_samples, torso_length_cm, RangeCalibration};
use crate::sim::perception::PerceptionConfig;
use crate::sim::plant::PlantModels;
use crate::sim::world::{Keyframe, MotionScript, PostureEvent};
use crate::sysid::FirstOrderModel;

/// Value of the `schema` field this version reads.
pub const SCENARIO_SCHEMA: &str = "sartrack.scenario/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn check(ok: bool, path: impl Into<String>, message: &str) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::new(path, message))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DisturbanceConfig {
    /// White noise on measured velocity during identification, m/s.
    pub output_noise_sigma: f64,
    /// Radial oscillation of every person about their scripted position.
    pub sine_amplitude_cm: f64,
    pub sine_period_s: f64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            output_noise_sigma: 0.0,
            sine_amplitude_cm: 0.0,
            sine_period_s: 4.0,
        }
    }
}

/// Gains for one axis: either given directly or tuned by pole placement.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AxisControlSpec {
    #[cfg_attr(feature = "serde", serde(default))]
    pub gains: Option<PDGains>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub settle_time_s: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default = "default_damping"))]
    pub damping: f64,
    pub limits: AxisLimits,
}

#[cfg(feature = "serde")]
fn default_damping() -> f64 {
    1.0
}

impl AxisControlSpec {
    fn tuned(settle_time_s: f64, limits: AxisLimits) -> Self {
        Self {
            gains: None,
            settle_time_s: Some(settle_time_s),
            damping: 1.0,
            limits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ControlConfig {
    /// Tune on models identified from synthetic flight logs instead of the
    /// true plant models.
    pub identify: bool,
    pub x: AxisControlSpec,
    pub z: AxisControlSpec,
    pub yaw: AxisControlSpec,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            identify: true,
            // A 2 m step saturates vx; faster requests cannot settle in time.
            x: AxisControlSpec::tuned(1.8, AxisLimits::symmetric(1.0, 6.0)),
            z: AxisControlSpec::tuned(1.0, AxisLimits::symmetric(1.0, 3.0)),
            yaw: AxisControlSpec::tuned(0.8, AxisLimits::symmetric(1.57, 6.0)),
        }
    }
}

/// Calibration generated from the pinhole model over a range interval.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PinholeCalibrationSpec {
    pub height_cm: f64,
    pub min_range_cm: f64,
    pub max_range_cm: f64,
    pub samples: u32,
}

impl Default for PinholeCalibrationSpec {
    fn default() -> Self {
        Self {
            height_cm: crate::range::MALE_HEIGHT_CM,
            min_range_cm: 150.0,
            max_range_cm: 350.0,
            samples: 11,
        }
    }
}

/// Exactly one of the two sources; the pinhole generator when both are unset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CalibrationSpec {
    pub coefficients: Option<RangeCalibration>,
    pub pinhole: Option<PinholeCalibrationSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct UavStart {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

impl Default for UavStart {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 1.4,
            heading: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PersonSpec {
    pub id: u32,
    #[cfg_attr(feature = "serde", serde(default = "default_height"))]
    pub height_cm: f64,
    /// Seed for the identity embedding; derived from the scenario seed and the
    /// id when unset.
    #[cfg_attr(feature = "serde", serde(default))]
    pub embedding_seed: Option<u64>,
    pub script: Vec<Keyframe>,
}

#[cfg(feature = "serde")]
fn default_height() -> f64 {
    crate::range::MALE_HEIGHT_CM
}

/// A template captured from a scripted person before the mission starts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TemplateSpec {
    pub label: String,
    pub person: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ButtonName {
    StartSearch,
    StartTrack,
    CaptureTemplate,
    GoFree,
}

/// An operator action at time `t`: a button press, a new manual velocity, or
/// both.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ScriptedInput {
    pub t: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub button: Option<ButtonName>,
    /// Template label for `capture_template`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub label: Option<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub manual: Option<VelocityCommand>,
}

impl ScriptedInput {
    pub fn to_button(&self) -> Option<Button> {
        self.button.map(|b| match b {
            ButtonName::StartSearch => Button::StartSearch,
            ButtonName::StartTrack => Button::StartTrack,
            ButtonName::CaptureTemplate => Button::CaptureTemplate(self.label.clone()),
            ButtonName::GoFree => Button::GoFree,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub physics_rate_hz: u32,
    pub camera: CameraModel,
    pub uav: UavStart,
    pub plant: PlantModels,
    pub control: ControlConfig,
    pub calibration: CalibrationSpec,
    pub perception: PerceptionConfig,
    pub disturbance: DisturbanceConfig,
    pub mission: MissionConfig,
    pub people: Vec<PersonSpec>,
    pub templates: Vec<TemplateSpec>,
    /// Template registry file, resolved relative to the scenario file by the
    /// loader.
    pub registry: Option<String>,
    pub inputs: Vec<ScriptedInput>,
    pub posture_events: Vec<PostureEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema: SCENARIO_SCHEMA.to_string(),
            name: String::new(),
            seed: 0,
            duration_s: 30.0,
            physics_rate_hz: 100,
            camera: CameraModel::default(),
            uav: UavStart::default(),
            plant: PlantModels::default(),
            control: ControlConfig::default(),
            calibration: CalibrationSpec::default(),
            perception: PerceptionConfig::default(),
            disturbance: DisturbanceConfig::default(),
            mission: MissionConfig::default(),
            people: Vec::new(),
            templates: Vec::new(),
            registry: None,
            inputs: Vec::new(),
            posture_events: Vec::new(),
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn validate_model(m: &FirstOrderModel, path: &str) -> Result<(), ScenarioError> {
    check(m.gain.is_finite() && m.gain > 0.0, format!("{path}.gain"), "must be positive")?;
    check(positive(m.tau), format!("{path}.tau"), "must be positive")
}

fn validate_rate(rate: u32, physics: u32, path: &str) -> Result<(), ScenarioError> {
    check(rate >= 1, path, "must be at least 1 Hz")?;
    check(rate <= physics, path, "must not exceed physics_rate_hz")
}

fn divides(slow: u32, fast: u32, path: &str, fast_name: &str) -> Result<(), ScenarioError> {
    check(
        fast.is_multiple_of(slow),
        path,
        &format!("must divide {fast_name} ({fast} Hz) so ticks coincide"),
    )
}

impl Scenario {
    pub fn start_pose(&self) -> WorldPose {
        WorldPose::new(self.uav.x, self.uav.y, self.uav.z, self.uav.heading)
    }

    /// Structural checks that need no computation. Cross-references against
    /// an external registry are checked when the simulation is built.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check(self.schema == SCENARIO_SCHEMA, "schema", &format!("expected \"{SCENARIO_SCHEMA}\""))?;
        check(positive(self.duration_s), "duration_s", "must be positive")?;
        check(self.physics_rate_hz >= 1, "physics_rate_hz", "must be at least 1 Hz")?;

        let c = &self.camera;
        check(positive(c.focal_px), "camera.focal_px", "must be positive")?;
        check(positive(c.width), "camera.width", "must be positive")?;
        check(positive(c.height), "camera.height", "must be positive")?;
        check((0.0..=c.width).contains(&c.center_x), "camera.center_x", "must lie inside the image")?;
        check((0.0..=c.height).contains(&c.center_y), "camera.center_y", "must lie inside the image")?;

        let u = &self.uav;
        check(u.x.is_finite() && u.y.is_finite(), "uav", "position must be finite")?;
        check(u.z >= 0.0 && u.z.is_finite(), "uav.z", "must be non-negative")?;
        check(u.heading.is_finite(), "uav.heading", "must be finite")?;

        for (m, name) in [
            (&self.plant.x, "plant.x"),
            (&self.plant.y, "plant.y"),
            (&self.plant.z, "plant.z"),
            (&self.plant.yaw, "plant.yaw"),
        ] {
            validate_model(m, name)?;
        }

        for (a, name) in [
            (&self.control.x, "control.x"),
            (&self.control.z, "control.z"),
            (&self.control.yaw, "control.yaw"),
        ] {
            check(
                a.gains.is_some() != a.settle_time_s.is_some(),
                name,
                "set exactly one of gains or settle_time_s",
            )?;
            if let Some(g) = a.gains {
                g.validate().map_err(|e| ScenarioError::new(format!("{name}.gains"), e.to_string()))?;
            }
            if let Some(ts) = a.settle_time_s {
                check(positive(ts), format!("{name}.settle_time_s"), "must be positive")?;
                check(
                    (0.7..=1.5).contains(&a.damping),
                    format!("{name}.damping"),
                    "must lie in [0.7, 1.5]",
                )?;
            }
            a.limits
                .validate()
                .map_err(|e| ScenarioError::new(format!("{name}.limits"), e.to_string()))?;
        }

        let p = &self.perception;
        let phys = self.physics_rate_hz;
        validate_rate(p.detect_rate_hz, phys, "perception.detect_rate_hz")?;
        validate_rate(p.pose_rate_hz, phys, "perception.pose_rate_hz")?;
        validate_rate(p.face_rate_hz, phys, "perception.face_rate_hz")?;
        validate_rate(p.control_rate_hz, phys, "perception.control_rate_hz")?;
        divides(p.pose_rate_hz, p.detect_rate_hz, "perception.pose_rate_hz", "detect_rate_hz")?;
        divides(p.face_rate_hz, p.pose_rate_hz, "perception.face_rate_hz", "pose_rate_hz")?;
        divides(p.control_rate_hz, p.pose_rate_hz, "perception.control_rate_hz", "pose_rate_hz")?;
        check(
            p.pixel_noise_sigma >= 0.0 && p.pixel_noise_sigma.is_finite(),
            "perception.pixel_noise_sigma",
            "must be non-negative",
        )?;
        check(
            p.embedding_noise_sigma >= 0.0 && p.embedding_noise_sigma.is_finite(),
            "perception.embedding_noise_sigma",
            "must be non-negative",
        )?;
        check((0.0..=1.0).contains(&p.glitch_prob), "perception.glitch_prob", "must lie in [0, 1]")?;
        check(
            (0.0..=core::f64::consts::PI).contains(&p.face_visibility_half_angle),
            "perception.face_visibility_half_angle",
            "must lie in [0, pi]",
        )?;
        check(
            p.torso_ratio > 0.0 && p.torso_ratio < 0.47,
            "perception.torso_ratio",
            "must lie in (0, 0.47)",
        )?;
        check(p.bbox_margin_px >= 0.0, "perception.bbox_margin_px", "must be non-negative")?;
        for (i, b) in p.blackouts.iter().enumerate() {
            check(b.start_s >= 0.0, format!("perception.blackouts[{i}].start_s"), "must be non-negative")?;
            check(positive(b.duration_s), format!("perception.blackouts[{i}].duration_s"), "must be positive")?;
        }

        let d = &self.disturbance;
        check(
            d.output_noise_sigma >= 0.0 && d.output_noise_sigma.is_finite(),
            "disturbance.output_noise_sigma",
            "must be non-negative",
        )?;
        check(
            d.sine_amplitude_cm >= 0.0 && d.sine_amplitude_cm.is_finite(),
            "disturbance.sine_amplitude_cm",
            "must be non-negative",
        )?;
        check(
            d.sine_amplitude_cm == 0.0 || positive(d.sine_period_s),
            "disturbance.sine_period_s",
            "must be positive when the amplitude is",
        )?;

        let m = &self.mission;
        check(positive(m.track_setpoint_cm), "mission.track_setpoint_cm", "must be positive")?;
        check(positive(m.yaw_cap), "mission.yaw_cap", "must be positive")?;
        check(
            m.search_yaw_rate.is_finite() && m.search_yaw_rate.abs() <= m.yaw_cap,
            "mission.search_yaw_rate",
            "magnitude must not exceed yaw_cap",
        )?;
        check(m.loss_frames >= 1, "mission.loss_frames", "must be at least 1")?;
        check(positive(m.reconfirm_timeout_s), "mission.reconfirm_timeout_s", "must be positive")?;
        check(m.centering_tolerance_px >= 0.0, "mission.centering_tolerance_px", "must be non-negative")?;
        check(m.capture_radius_px >= 0.0, "mission.capture_radius_px", "must be non-negative")?;
        check(!m.default_capture_label.is_empty(), "mission.default_capture_label", "must be non-empty")?;
        check(
            positive(m.guard.max_closing_speed_cm_s),
            "mission.guard.max_closing_speed_cm_s",
            "must be positive",
        )?;
        check(m.guard.hold_duration_s >= 0.0, "mission.guard.hold_duration_s", "must be non-negative")?;

        let cal = &self.calibration;
        check(
            !(cal.coefficients.is_some() && cal.pinhole.is_some()),
            "calibration",
            "set at most one of coefficients or pinhole",
        )?;
        if let Some(coeff) = &cal.coefficients {
            coeff
                .validate()
                .map_err(|e| ScenarioError::new("calibration.coefficients", e.to_string()))?;
            check(
                coeff.is_strictly_decreasing(),
                "calibration.coefficients",
                "must be strictly decreasing over its domain",
            )?;
        }
        if let Some(ph) = &cal.pinhole {
            check(
                (140.0..=210.0).contains(&ph.height_cm),
                "calibration.pinhole.height_cm",
                "must lie in [140, 210]",
            )?;
            check(positive(ph.min_range_cm), "calibration.pinhole.min_range_cm", "must be positive")?;
            check(
                ph.max_range_cm > ph.min_range_cm,
                "calibration.pinhole.max_range_cm",
                "must exceed min_range_cm",
            )?;
            check(ph.samples >= 3, "calibration.pinhole.samples", "must be at least 3")?;
        }

        let mut ids: Vec<u32> = Vec::new();
        for (i, person) in self.people.iter().enumerate() {
            check(!ids.contains(&person.id), format!("people[{i}].id"), "duplicate person id")?;
            ids.push(person.id);
            check(
                (140.0..=210.0).contains(&person.height_cm),
                format!("people[{i}].height_cm"),
                "must lie in [140, 210]",
            )?;
            check(!person.script.is_empty(), format!("people[{i}].script"), "must not be empty")?;
            for (j, k) in person.script.iter().enumerate() {
                check(
                    k.t.is_finite() && k.x.is_finite() && k.y.is_finite() && k.heading.is_none_or(f64::is_finite),
                    format!("people[{i}].script[{j}]"),
                    "values must be finite",
                )?;
                check(
                    j == 0 || k.t > person.script[j - 1].t,
                    format!("people[{i}].script[{j}].t"),
                    "keyframe times must be strictly increasing",
                )?;
            }
        }

        for (i, t) in self.templates.iter().enumerate() {
            check(!t.label.is_empty(), format!("templates[{i}].label"), "must be non-empty")?;
            check(ids.contains(&t.person), format!("templates[{i}].person"), "no person with this id")?;
        }

        for (i, input) in self.inputs.iter().enumerate() {
            check(
                input.t >= 0.0 && input.t.is_finite(),
                format!("inputs[{i}].t"),
                "must be non-negative",
            )?;
            check(
                i == 0 || input.t >= self.inputs[i - 1].t,
                format!("inputs[{i}].t"),
                "inputs must be sorted by time",
            )?;
            check(
                input.button.is_some() || input.manual.is_some(),
                format!("inputs[{i}]"),
                "needs a button or a manual velocity",
            )?;
            check(
                input.label.is_none() || input.button == Some(ButtonName::CaptureTemplate),
                format!("inputs[{i}].label"),
                "only valid with capture_template",
            )?;
            check(
                input.label.as_deref() != Some(""),
                format!("inputs[{i}].label"),
                "must be non-empty",
            )?;
            if let Some(v) = &input.manual {
                check(v.is_finite(), format!("inputs[{i}].manual"), "must be finite")?;
            }
        }

        for (i, e) in self.posture_events.iter().enumerate() {
            check(ids.contains(&e.person), format!("posture_events[{i}].person"), "no person with this id")?;
            check(e.t >= 0.0 && e.t.is_finite(), format!("posture_events[{i}].t"), "must be non-negative")?;
            check(positive(e.duration_s), format!("posture_events[{i}].duration_s"), "must be positive")?;
            check(
                e.torso_scale > 0.0 && e.torso_scale <= 1.5,
                format!("posture_events[{i}].torso_scale"),
                "must lie in (0, 1.5]",
            )?;
        }
        Ok(())
    }

    pub fn motion_scripts(&self) -> Result<Vec<MotionScript>, ScenarioError> {
        self.people
            .iter()
            .enumerate()
            .map(|(i, p)| {
                MotionScript::new(p.script.clone())
                    .map_err(|e| ScenarioError::new(format!("people[{i}].script"), format!("{e:?}")))
            })
            .collect()
    }

    /// The range model: explicit coefficients or a pinhole-generated fit.
    pub fn build_calibration(&self) -> Result<RangeCalibration, ScenarioError> {
        let calib = match (&self.calibration.coefficients, &self.calibration.pinhole) {
            (Some(c), _) => *c,
            (None, spec) => {
                let spec = spec.unwrap_or_default();
                let torso = torso_length_cm(spec.height_cm, self.perception.torso_ratio);
                let n = spec.samples.max(2);
                let step = (spec.max_range_cm - spec.min_range_cm) / f64::from(n - 1);
                let ranges = (0..n).map(|i| spec.min_range_cm + step * f64::from(i));
                let samples = pinhole_samples(self.camera.focal_px, torso, ranges);
                fit_calibration(&samples, spec.height_cm)
                    .map_err(|e| ScenarioError::new("calibration.pinhole", e.to_string()))?
            }
        };
        let (near, far) = (calib.eval(calib.x_max), calib.eval(calib.x_min));
        check(
            (near..=far).contains(&self.mission.track_setpoint_cm),
            "mission.track_setpoint_cm",
            &format!("must lie within the calibrated range [{near:.1}, {far:.1}] cm"),
        )?;
        Ok(calib)
    }

    /// Builds the controller bank from per-axis velocity models (true or
    /// identified) of the forward, vertical and yaw axes.
    pub fn build_controllers(&self, x: &FirstOrderModel, z: &FirstOrderModel, yaw: &FirstOrderModel) -> Result<ControllerBank, ScenarioError> {
        let f = self.camera.focal_px;
        let range_m = self.mission.track_setpoint_cm / 100.0;
        let axis = |spec: &AxisControlSpec, model: &FirstOrderModel, scale: f64, path: &str| {
            let gains = match (spec.gains, spec.settle_time_s) {
                (Some(g), _) => g,
                (None, Some(ts)) => tune_pd(&error_rate_model(model, scale), ts, spec.damping)
                    .map_err(|e| ScenarioError::new(format!("{path}.settle_time_s"), e.to_string()))?,
                (None, None) => return Err(ScenarioError::new(path, "set exactly one of gains or settle_time_s")),
            };
            Ok(AxisController::new(gains, spec.limits))
        };
        Ok(ControllerBank {
            x_axis: axis(&self.control.x, x, 100.0, "control.x")?,
            z_axis: axis(&self.control.z, z, f / range_m, "control.z")?,
            yaw_axis: axis(&self.control.yaw, yaw, f, "control.yaw")?,
        })
    }

    pub fn initial_mode(&self) -> Mode {
        self.mission.initial_mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::perception::Blackout;

    fn walker() -> Scenario {
        Scenario {
            people: alloc::vec![PersonSpec {
                id: 1,
                height_cm: 180.0,
                embedding_seed: None,
                script: alloc::vec![
                    Keyframe { t: 0.0, x: 3.0, y: 0.0, heading: None },
                    Keyframe { t: 10.0, x: 8.0, y: 0.0, heading: None },
                ],
            }],
            templates: alloc::vec![TemplateSpec { label: "alice".to_string(), person: 1 }],
            ..Scenario::default()
        }
    }

    fn path_of(s: &Scenario) -> String {
        s.validate().unwrap_err().path
    }

    #[test]
    fn default_is_valid() {
        Scenario::default().validate().unwrap();
        walker().validate().unwrap();
        let calib = walker().build_calibration().unwrap();
        assert!(calib.is_strictly_decreasing());
    }

    #[test]
    fn errors_name_the_field() {
        let mut s = walker();
        s.perception.detect_rate_hz = 0;
        assert_eq!(path_of(&s), "perception.detect_rate_hz");

        let mut s = walker();
        s.perception.pose_rate_hz = 7;
        assert_eq!(path_of(&s), "perception.pose_rate_hz");

        let mut s = walker();
        s.perception.detect_rate_hz = 120;
        assert_eq!(path_of(&s), "perception.detect_rate_hz");

        let mut s = walker();
        s.people[0].script[1].t = 0.0;
        assert_eq!(path_of(&s), "people[0].script[1].t");

        let mut s = walker();
        s.templates[0].person = 9;
        assert_eq!(path_of(&s), "templates[0].person");

        let mut s = walker();
        s.mission.search_yaw_rate = 1.0;
        assert_eq!(path_of(&s), "mission.search_yaw_rate");

        let mut s = walker();
        s.perception.glitch_prob = 1.5;
        assert_eq!(path_of(&s), "perception.glitch_prob");

        let mut s = walker();
        s.perception.blackouts.push(Blackout { start_s: 1.0, duration_s: 0.0 });
        assert_eq!(path_of(&s), "perception.blackouts[0].duration_s");

        let mut s = walker();
        s.control.x.gains = Some(PDGains { kp: 1.0, kd: 0.0 });
        assert_eq!(path_of(&s), "control.x");

        let mut s = walker();
        s.schema = "sartrack.scenario/0".to_string();
        assert_eq!(path_of(&s), "schema");

        let mut s = walker();
        s.people[0].height_cm = 230.0;
        assert_eq!(path_of(&s), "people[0].height_cm");
    }

    #[test]
    fn setpoint_outside_calibration_rejected() {
        let mut s = walker();
        s.mission.track_setpoint_cm = 500.0;
        s.validate().unwrap();
        assert_eq!(s.build_calibration().unwrap_err().path, "mission.track_setpoint_cm");
    }

    #[test]
    fn tuned_bank_matches_pole_placement() {
        let s = walker();
        let p = &s.plant;
        let bank = s.build_controllers(&p.x, &p.z, &p.yaw).unwrap();
        // Forward axis: K = 1.5 m/s * 100 cm/m, tau 0.4, Ts 1.8, zeta 1.
        let wn = 4.0 / 1.8;
        let k = 150.0;
        assert!((bank.x_axis.gains.kp - 0.4 * wn * wn / k).abs() < 1e-12);
        assert!((bank.x_axis.gains.kd - (2.0 * wn * 0.4 - 1.0) / k).abs() < 1e-12);
    }
}
