//! Per-tick records and the run summary.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::geometry::{VelocityCommand, WorldPose};
use crate::mission::{MissionEvent, Mode};
use crate::sim::schedule::TickFlags;

/// Everything observable about one physics tick. The pose is the state at
/// the start of the tick; the command is the one held during it.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub flags: TickFlags,
    pub mode: Mode,
    pub pose: WorldPose,
    pub command: VelocityCommand,
    /// Guarded range estimate from the latest control tick in Track.
    pub range_est_cm: Option<f64>,
    /// Ground distance to the locked target.
    pub range_true_cm: Option<f64>,
    pub target_id: Option<u32>,
    pub motion_hold: bool,
    /// Shoulder midpoint minus image center, on control ticks with a
    /// measurement.
    pub centering_error_px: Option<(f64, f64)>,
    /// A detection tick whose frame was dropped.
    pub frame_dropped: bool,
    pub events: Vec<MissionEvent>,
}

impl TickRecord {
    pub fn log_row(&self) -> LogRow {
        LogRow {
            t: self.t,
            mode: self.mode,
            pose: self.pose,
            vx_cmd: self.command.vx,
            vz_cmd: self.command.vz,
            yaw_cmd: self.command.yaw_rate,
            range_est_cm: self.range_est_cm,
            range_true_cm: self.range_true_cm,
            target_id: self.target_id,
            events: self.events.iter().map(|e| e.to_string()).collect(),
        }
    }
}

/// One row of the telemetry log, the columns of the CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub mode: Mode,
    pub pose: WorldPose,
    pub vx_cmd: f64,
    pub vz_cmd: f64,
    pub yaw_cmd: f64,
    pub range_est_cm: Option<f64>,
    pub range_true_cm: Option<f64>,
    pub target_id: Option<u32>,
    pub events: Vec<String>,
}

/// Tracking half-band around the setpoint.
pub const TRACK_BAND_CM: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: usize,
    pub duration_s: f64,
    /// Path length of the vehicle, meters.
    pub distance_travelled_m: f64,
    pub first_track_s: Option<f64>,
    /// First Track row with the true range inside the band.
    pub convergence_s: Option<f64>,
    /// True range error RMS over Track rows from convergence on.
    pub range_rms_cm: Option<f64>,
    /// Share of those rows inside the band.
    pub in_band_fraction: Option<f64>,
    /// `(t, event)` in log order.
    pub events: Vec<(f64, String)>,
}

impl Summary {
    pub fn from_rows(rows: &[LogRow], setpoint_cm: f64) -> Self {
        let distance_travelled_m = rows
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0].pose, &w[1].pose);
                let (dx, dy, dz) = (b.x - a.x, b.y - a.y, b.z - a.z);
                libm::sqrt(dx * dx + dy * dy + dz * dz)
            })
            .sum();
        let first_track_s = rows.iter().find(|r| r.mode == Mode::Track).map(|r| r.t);
        let errors = |r: &LogRow| {
            (r.mode == Mode::Track)
                .then_some(r.range_true_cm)
                .flatten()
                .map(|d| d - setpoint_cm)
        };
        let convergence = rows
            .iter()
            .position(|r| errors(r).is_some_and(|e| e.abs() <= TRACK_BAND_CM));
        let (range_rms_cm, in_band_fraction) = match convergence {
            Some(start) => {
                let errs: Vec<f64> = rows[start..].iter().filter_map(errors).collect();
                let n = errs.len() as f64;
                let rms = libm::sqrt(errs.iter().map(|e| e * e).sum::<f64>() / n);
                let inside = errs.iter().filter(|e| e.abs() <= TRACK_BAND_CM).count() as f64;
                (Some(rms), Some(inside / n))
            }
            None => (None, None),
        };
        Self {
            rows: rows.len(),
            duration_s: match (rows.first(), rows.last()) {
                (Some(a), Some(b)) => b.t - a.t,
                _ => 0.0,
            },
            distance_travelled_m,
            first_track_s,
            convergence_s: convergence.map(|i| rows[i].t),
            range_rms_cm,
            in_band_fraction,
            events: rows
                .iter()
                .flat_map(|r| r.events.iter().map(move |e| (r.t, e.clone())))
                .collect(),
        }
    }
}
