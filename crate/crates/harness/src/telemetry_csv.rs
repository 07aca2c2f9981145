//! Telemetry log file: one row per physics tick.
//!
//! Numbers use fixed precision so that identical runs produce identical
//! bytes. Optional values are empty cells; the event cell is always quoted
//! and joins the tick's events with `;`.

use std::fmt::Write as _;

use sartrack_core::geometry::WorldPose;
use sartrack_core::mission::Mode;
use sartrack_core::sim::LogRow;
use thiserror::Error;

pub const TELEMETRY_HEADER: &str =
    "t,mode,x,y,z,heading,vx_cmd,vz_cmd,yaw_cmd,range_est_cm,range_true_cm,target_id,event";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Canonical form of a row, as written to the file.
pub fn format_row(r: &LogRow) -> String {
    let mut line = String::new();
    write!(
        line,
        "{:.3},{},{:.4},{:.4},{:.4},{:.5},{:.4},{:.4},{:.4},{},{},{},{}",
        r.t,
        r.mode,
        r.pose.x,
        r.pose.y,
        r.pose.z,
        r.pose.heading,
        r.vx_cmd,
        r.vz_cmd,
        r.yaw_cmd,
        opt(r.range_est_cm),
        opt(r.range_true_cm),
        r.target_id.map(|i| i.to_string()).unwrap_or_default(),
        quote(&r.events.join(";")),
    )
    .unwrap();
    // Negative zero would make byte equality depend on rounding direction.
    line.replace("-0.0000,", "0.0000,")
        .replace("-0.00000,", "0.00000,")
        .replace("-0.00,", "0.00,")
}

pub fn format_telemetry<'a>(rows: impl IntoIterator<Item = &'a LogRow>) -> String {
    let mut out = String::from(TELEMETRY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format_row(r));
        out.push('\n');
    }
    out
}

pub fn parse_telemetry(text: &str) -> Result<Vec<LogRow>, TelemetryError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let err = |line: u64, message: String| TelemetryError::Parse { line, message };
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>().join(",") != TELEMETRY_HEADER {
        return Err(err(1, format!("expected header {TELEMETRY_HEADER}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, TelemetryError> {
            record[i]
                .parse::<f64>()
                .map_err(|_| err(line, format!("column {} is not a number: {:?}", i + 1, &record[i])))
        };
        let opt_num = |i: usize| -> Result<Option<f64>, TelemetryError> {
            if record[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let mode = Mode::parse(&record[1]).ok_or_else(|| err(line, format!("unknown mode {:?}", &record[1])))?;
        let target_id = if record[11].is_empty() {
            None
        } else {
            Some(record[11].parse::<u32>().map_err(|_| err(line, "target_id is not an integer".into()))?)
        };
        let events = if record[12].is_empty() {
            Vec::new()
        } else {
            record[12].split(';').map(str::to_string).collect()
        };
        rows.push(LogRow {
            t: num(0)?,
            mode,
            pose: WorldPose {
                x: num(2)?,
                y: num(3)?,
                z: num(4)?,
                heading: num(5)?,
            },
            vx_cmd: num(6)?,
            vz_cmd: num(7)?,
            yaw_cmd: num(8)?,
            range_est_cm: opt_num(9)?,
            range_true_cm: opt_num(10)?,
            target_id,
            events,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> LogRow {
        LogRow {
            t: 1.23,
            mode: Mode::AwaitConfirm,
            pose: WorldPose {
                x: 1.0,
                y: -0.00001,
                z: 1.4,
                heading: 0.5,
            },
            vx_cmd: 0.0,
            vz_cmd: 0.1,
            yaw_cmd: -0.25,
            range_est_cm: None,
            range_true_cm: Some(212.346),
            target_id: Some(7),
            events: vec![
                "mode_changed(from=search,to=await_confirm)".into(),
                "target_found(track=7,label=alice,d=0.2100)".into(),
            ],
        }
    }

    #[test]
    fn row_format() {
        assert_eq!(
            format_row(&row()),
            "1.230,await_confirm,1.0000,0.0000,1.4000,0.50000,0.0000,0.1000,-0.2500,,212.35,7,\
             \"mode_changed(from=search,to=await_confirm);target_found(track=7,label=alice,d=0.2100)\""
        );
    }

    #[test]
    fn parse_inverts_format_at_file_precision() {
        let text = format_telemetry([&row()]);
        let parsed = parse_telemetry(&text).unwrap();
        assert_eq!(format_telemetry(&parsed), text);
        assert_eq!(parsed[0].events.len(), 2);
        assert_eq!(parsed[0].range_est_cm, None);
    }

    #[test]
    fn bad_rows_report_lines() {
        let text = format!("{TELEMETRY_HEADER}\n{}\n1.0,hover,0,0,0,0,0,0,0,,,,\"\"\n", format_row(&row()));
        match parse_telemetry(&text) {
            Err(TelemetryError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("hover"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_telemetry("a,b\n").is_err());
    }
}
