//! Identification telemetry file: `t,u,v` (time s, command, measured
//! velocity), one sample per line.

use std::fmt::Write as _;

use sartrack_core::sysid::{SysIdError, TelemetrySeries};
use thiserror::Error;

pub const SYSID_HEADER: &str = "t,u,v";

#[derive(Debug, Error)]
pub enum SysIdFileError {
    #[error("empty file: expected header {SYSID_HEADER} and samples")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Series(#[from] SysIdError),
}

pub fn format_series(series: &TelemetrySeries) -> String {
    let mut out = format!("{SYSID_HEADER}\n");
    for (k, (u, v)) in series.inputs().iter().zip(series.outputs()).enumerate() {
        writeln!(out, "{},{u},{v}", k as f64 * series.dt()).unwrap();
    }
    out
}

pub fn parse_series(text: &str) -> Result<TelemetrySeries, SysIdFileError> {
    if text.trim().is_empty() {
        return Err(SysIdFileError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| SysIdFileError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["t", "u", "v"] {
        return Err(SysIdFileError::Parse {
            line: 1,
            message: format!("expected header {SYSID_HEADER}"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| SysIdFileError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut vals = [0.0; 3];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = record[i].parse().map_err(|_| SysIdFileError::Parse {
                line,
                message: format!("column {} is not a number: {:?}", i + 1, &record[i]),
            })?;
        }
        rows.push((vals[0], vals[1], vals[2]));
    }
    if rows.is_empty() {
        return Err(SysIdFileError::Empty);
    }
    Ok(TelemetrySeries::from_rows(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = TelemetrySeries::new(0.02, (0..20).map(|i| (i % 5) as f64).collect(), (0..20).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        assert_eq!(parse_series(&format_series(&s)).unwrap(), s);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_series(""), Err(SysIdFileError::Empty)));
        assert!(matches!(parse_series("t,u,v\n"), Err(SysIdFileError::Empty)));
        match parse_series("t,u,v\n0,1,0\n0.02,x,0\n") {
            Err(SysIdFileError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_series("time,u,v\n0,1,0\n"), Err(SysIdFileError::Parse { line: 1, .. })));
    }
}
