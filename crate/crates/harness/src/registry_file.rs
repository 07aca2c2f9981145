//! Template registry file.
//!
//! ```text
//! # sartrack.registry/1
//! label,captured_at,e0,e1,...,e127
//! alice,0,0.0123,...
//! ```
//!
//! Floats are written in shortest round-trip form, so a registry survives a
//! save/load cycle bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use sartrack_core::identity::{Embedding, Registry, Template, EMBEDDING_DIM};
use thiserror::Error;

use crate::atomic::write_atomic;

pub const REGISTRY_SCHEMA_LINE: &str = "# sartrack.registry/1";

#[derive(Debug, Error)]
pub enum RegistryFileError {
    #[error("cannot access registry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line 1: expected schema line \"{REGISTRY_SCHEMA_LINE}\"")]
    Schema,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn header() -> String {
    let mut h = String::from("label,captured_at");
    for i in 0..EMBEDDING_DIM {
        write!(h, ",e{i}").unwrap();
    }
    h
}

pub fn format_registry(registry: &Registry) -> String {
    let mut out = format!("{REGISTRY_SCHEMA_LINE}\n{}\n", header());
    for t in registry.templates() {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let mut record = vec![t.label.clone(), t.captured_at.to_string()];
        record.extend(t.embedding.values().iter().map(|v| v.to_string()));
        w.write_record(&record).expect("writing to memory");
        out.push_str(std::str::from_utf8(&w.into_inner().expect("flush to memory")).expect("utf-8"));
    }
    out
}

pub fn parse_registry(text: &str) -> Result<Registry, RegistryFileError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != REGISTRY_SCHEMA_LINE {
        return Err(RegistryFileError::Schema);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let parse_err = |line: u64, message: String| RegistryFileError::Parse { line: line + 1, message };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != header() {
        return Err(parse_err(1, format!("expected header label,captured_at,e0..e{}", EMBEDDING_DIM - 1)));
    }
    let mut templates = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |i: usize| -> Result<f64, RegistryFileError> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {} is not a number: {:?}", i + 1, &record[i])))
        };
        let captured_at = number(1)?;
        let values = (2..record.len()).map(number).collect::<Result<Vec<f64>, _>>()?;
        let embedding = Embedding::from_slice(&values).map_err(|e| parse_err(line, e.to_string()))?;
        templates.push(Template {
            label: record[0].to_string(),
            embedding,
            captured_at,
        });
    }
    Registry::from_templates(templates).map_err(|e| parse_err(0, e.to_string()))
}

pub fn load_registry(path: &Path) -> Result<Registry, RegistryFileError> {
    parse_registry(&std::fs::read_to_string(path)?)
}

pub fn save_registry(path: &Path, registry: &Registry) -> Result<(), RegistryFileError> {
    Ok(write_atomic(path, format_registry(registry).as_bytes())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample() -> Registry {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut reg = Registry::new();
        for (i, label) in ["alice", "bob, jr"].into_iter().enumerate() {
            let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-0.3..0.3)).collect();
            reg.capture(label, Embedding::from_slice(&v).unwrap(), i as f64 * 1.25).unwrap();
        }
        reg
    }

    #[test]
    fn round_trip_is_exact() {
        let reg = sample();
        let text = format_registry(&reg);
        assert!(text.starts_with(REGISTRY_SCHEMA_LINE));
        assert_eq!(parse_registry(&text).unwrap(), reg);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.csv");
        save_registry(&path, &reg).unwrap();
        assert_eq!(load_registry(&path).unwrap(), reg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(parse_registry("label\n"), Err(RegistryFileError::Schema)));
        let text = format_registry(&sample());
        let broken = text.replacen("alice,0,", "alice,zero,", 1);
        match parse_registry(&broken) {
            Err(RegistryFileError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = format!("{REGISTRY_SCHEMA_LINE}\n{}\nalice,0,0.1\n", header());
        assert!(matches!(parse_registry(&short), Err(RegistryFileError::Parse { line: 3, .. })));
    }
}
