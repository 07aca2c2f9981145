//! JSON messages of the live gateway. Every message is an object with a
//! `type` tag.
//!
//! Client to server: `set_mode {mode}`, `manual {vx, vy, vz, yaw_rate}`,
//! `button {name}`, `capture_template {label}`.
//!
//! Server to client: `hello {role}` once, `state {...}` at the control rate,
//! and `error {message}` in reply to a rejected message.

use sartrack_core::geometry::{BoundingBox, VelocityCommand, WorldPose};
use sartrack_core::mission::{Button, Mode, OperatorInput};
use sartrack_core::sim::runner::Snapshot;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SetMode {
        mode: String,
    },
    Manual {
        vx: f64,
        vy: f64,
        vz: f64,
        yaw_rate: f64,
    },
    Button {
        name: String,
    },
    CaptureTemplate {
        #[serde(default)]
        label: Option<String>,
    },
}

impl ClientMessage {
    /// Maps the message to simulation input, or explains why it is rejected.
    pub fn to_input(&self) -> Result<OperatorInput, String> {
        let button = |b| {
            Ok(OperatorInput {
                manual_velocity: None,
                button: Some(b),
            })
        };
        match self {
            ClientMessage::SetMode { mode } => match mode.as_str() {
                "free" => button(Button::GoFree),
                "search" => button(Button::StartSearch),
                "track" => button(Button::StartTrack),
                other => Err(format!("mode {other:?} cannot be requested; use free, search or track")),
            },
            ClientMessage::Manual { vx, vy, vz, yaw_rate } => {
                let v = VelocityCommand {
                    vx: *vx,
                    vy: *vy,
                    vz: *vz,
                    yaw_rate: *yaw_rate,
                };
                if !v.is_finite() {
                    return Err("manual velocity must be finite".into());
                }
                Ok(OperatorInput {
                    manual_velocity: Some(v),
                    button: None,
                })
            }
            ClientMessage::Button { name } => match name.as_str() {
                "start_search" => button(Button::StartSearch),
                "start_track" => button(Button::StartTrack),
                "capture_template" => button(Button::CaptureTemplate(None)),
                "go_free" => button(Button::GoFree),
                other => Err(format!("unknown button {other:?}")),
            },
            ClientMessage::CaptureTemplate { label } => match label.as_deref() {
                Some("") => Err("label must be non-empty".into()),
                _ => button(Button::CaptureTemplate(label.clone())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

impl From<WorldPose> for PoseMsg {
    fn from(p: WorldPose) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            heading: p.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonMsg {
    pub track_id: u32,
    pub bbox: BoundingBox,
    /// COCO order, `[u, v, visible]`; absent outside pose ticks.
    pub keypoints: Option<Vec<(f64, f64, bool)>>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        role: Role,
    },
    State {
        t: f64,
        tick: u64,
        mode: Mode,
        uav: PoseMsg,
        people: Vec<PersonMsg>,
        range_est_cm: Option<f64>,
        commands: VelocityCommand,
        target_id: Option<u32>,
        events: Vec<String>,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

impl ServerMessage {
    pub fn state(s: &Snapshot, events: Vec<String>) -> Self {
        ServerMessage::State {
            t: s.t,
            tick: s.tick,
            mode: s.mode,
            uav: s.pose.into(),
            people: s
                .people
                .iter()
                .map(|p| PersonMsg {
                    track_id: p.track_id,
                    bbox: p.bbox,
                    keypoints: p
                        .keypoints
                        .map(|k| k.points.iter().map(|q| (q.u, q.v, q.visible)).collect()),
                    matched: p.matched,
                })
                .collect(),
            range_est_cm: s.range_est_cm,
            commands: s.command,
            target_id: s.target_id,
            events,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// One operator input as recorded in a session log: the simulation tick
/// before which it was queued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedInput {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual: Option<VelocityCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub button: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl RecordedInput {
    pub fn new(tick: u64, input: &OperatorInput) -> Self {
        let label = match &input.button {
            Some(Button::CaptureTemplate(l)) => l.clone(),
            _ => None,
        };
        Self {
            tick,
            manual: input.manual_velocity,
            button: input.button.as_ref().map(|b| b.name().to_string()),
            label,
        }
    }

    pub fn to_input(&self) -> Result<OperatorInput, String> {
        let button = match self.button.as_deref() {
            None => None,
            Some("capture_template") => Some(Button::CaptureTemplate(self.label.clone())),
            Some(name) => {
                ClientMessage::Button { name: name.into() }
                    .to_input()?
                    .button
            }
        };
        Ok(OperatorInput {
            manual_velocity: self.manual,
            button,
        })
    }
}
