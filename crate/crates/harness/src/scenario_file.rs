//! Scenario files (TOML) with field-path error reporting.

use std::path::{Path, PathBuf};

use sartrack_core::identity::Registry;
use sartrack_core::sim::{Scenario, ScenarioError};
use thiserror::Error;

use crate::registry_file::{load_registry, RegistryFileError};

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: syntax error: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: invalid scenario: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: ScenarioError,
    },
    #[error("{path}: registry {registry}: {source}")]
    Registry {
        path: PathBuf,
        registry: PathBuf,
        #[source]
        source: RegistryFileError,
    },
}

impl ScenarioFileError {
    /// Dotted path of the offending field, when the error concerns one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioFileError::Field { field, .. } => Some(field),
            ScenarioFileError::Invalid { source, .. } => Some(&source.path),
            _ => None,
        }
    }
}

/// A parsed scenario with its external registry resolved.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub registry: Registry,
}

/// Parses and validates scenario text. `path` is only used in messages.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, ScenarioFileError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ScenarioFileError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let message = e.inner().message().trim_end().to_string();
        ScenarioFileError::Field {
            path: path.to_path_buf(),
            field,
            message,
        }
    })?;
    scenario.validate().map_err(|source| ScenarioFileError::Invalid {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(scenario)
}

/// Reads a scenario file and the registry file it references, resolved
/// relative to the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = parse_scenario(&text, path)?;
    let registry = match &scenario.registry {
        Some(rel) => {
            let registry = path.parent().unwrap_or(Path::new(".")).join(rel);
            load_registry(&registry).map_err(|source| ScenarioFileError::Registry {
                path: path.to_path_buf(),
                registry,
                source,
            })?
        }
        None => Registry::new(),
    };
    Ok(LoadedScenario { scenario, registry })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, ScenarioFileError> {
        parse_scenario(text, Path::new("test.toml"))
    }

    const MINIMAL: &str = r#"
schema = "sartrack.scenario/1"
seed = 3

[[people]]
id = 1
script = [{ t = 0.0, x = 2.0, y = 0.0, heading = 3.14159 }]

[[templates]]
label = "alice"
person = 1
"#;

    #[test]
    fn minimal_file_uses_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.physics_rate_hz, 100);
        assert_eq!(s.perception.detect_rate_hz, 30);
        assert_eq!(s.people[0].height_cm, 180.0);
        assert_eq!(s.templates[0].label, "alice");
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\n[perception]\ndetect_hz = 30");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.field(), Some("perception.detect_hz"), "{e}");
        assert!(e.to_string().contains("unknown field"), "{e}");
    }

    #[test]
    fn type_error_is_named() {
        let text = MINIMAL.replace("x = 2.0", "x = \"two\"");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.field(), Some("people[0].script[0].x"), "{e}");
    }

    #[test]
    fn invalid_rate_is_named() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\n[perception]\npose_rate_hz = 7");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.field(), Some("perception.pose_rate_hz"), "{e}");
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = MINIMAL.replace("scenario/1", "scenario/9");
        assert_eq!(parse(&text).unwrap_err().field(), Some("schema"));
    }

    #[test]
    fn syntax_error() {
        assert!(matches!(parse("seed = = 1"), Err(ScenarioFileError::Syntax { .. })));
    }
}
