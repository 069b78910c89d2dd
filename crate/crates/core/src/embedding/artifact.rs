use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

/// Versioned JSON envelope for fitted models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact<T> {
    pub format_version: u32,
    pub kind: String,
    pub model: T,
}

pub fn save_artifact<T: Serialize>(kind: &str, model: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let artifact = Artifact {
        format_version: ARTIFACT_VERSION,
        kind: kind.to_string(),
        model,
    };
    let mut text = serde_json::to_string_pretty(&artifact).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads an artifact, checking its version and that it holds `kind`.
pub fn load_artifact<T: DeserializeOwned>(kind: &str, path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let found = value.get("format_version").and_then(|v| v.as_u64());
    match found {
        Some(v) if v == ARTIFACT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Version {
                found: v as u32,
                expected: ARTIFACT_VERSION,
            })
        }
        None => return Err(Error::Format(format!("{}: missing format_version", path.display()))),
    }
    let artifact: Artifact<T> =
        serde_json::from_value(value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if artifact.kind != kind {
        return Err(Error::Format(format!(
            "{}: expected a {kind} artifact, found {}",
            path.display(),
            artifact.kind
        )));
    }
    Ok(artifact.model)
}
