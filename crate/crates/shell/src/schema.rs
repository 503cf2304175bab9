//! Versioned JSON documents: `{"schema": kind, "version": "MAJOR.MINOR", "data": ...}`.
//! Readers accept any minor version of a known major and reject newer majors.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{ShellError, ShellResult};
use crate::formats::write_bytes;

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_MINOR: u32 = 0;

pub mod kinds {
    pub const ANNOTATION: &str = "annotation";
    pub const SCENE_GRAPH: &str = "scene_graph";
    pub const LAYOUT: &str = "layout";
    pub const SCENE_SPEC: &str = "scene_spec";
    pub const EDIT_SCRIPT: &str = "edit_script";
    pub const DETECTIONS: &str = "detections";
    pub const GROUND_TRUTH: &str = "ground_truth";
    pub const LABELS: &str = "labels";
    pub const BOX_SAMPLES: &str = "box_samples";
    pub const METRIC_REPORT: &str = "metric_report";
    pub const RUN_CONFIG: &str = "run_config";
    pub const TRAIN_CONFIG: &str = "train_config";
    pub const TRAIN_DATASET: &str = "train_dataset";
    pub const TRAIN_LOG: &str = "train_log";
    pub const POSES: &str = "poses";
    pub const MANIFEST: &str = "manifest";
    pub const EDIT_MASK: &str = "edit_mask";
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing envelope field {0:?}")]
    MissingField(&'static str),
    #[error("expected schema {expected:?}, found {found:?}")]
    WrongKind { expected: String, found: String },
    #[error("malformed version {0:?}")]
    MalformedVersion(String),
    #[error("schema version {found} is newer than the supported major {supported}")]
    UnsupportedVersion { found: String, supported: u32 },
}

pub fn to_json_string<T: Serialize>(kind: &str, data: &T) -> Result<String, SchemaError> {
    let doc = serde_json::json!({
        "schema": kind,
        "version": format!("{SCHEMA_MAJOR}.{SCHEMA_MINOR}"),
        "data": serde_json::to_value(data)?,
    });
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, SchemaError> {
    let mut doc: Value = serde_json::from_str(text)?;
    let found = doc
        .get("schema")
        .and_then(Value::as_str)
        .ok_or(SchemaError::MissingField("schema"))?;
    if found != kind {
        return Err(SchemaError::WrongKind {
            expected: kind.into(),
            found: found.into(),
        });
    }
    let version = doc
        .get("version")
        .and_then(Value::as_str)
        .ok_or(SchemaError::MissingField("version"))?;
    let major: u32 = version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .filter(|_| version.split('.').count() == 2 && version.split('.').all(|p| p.parse::<u32>().is_ok()))
        .ok_or_else(|| SchemaError::MalformedVersion(version.into()))?;
    if major > SCHEMA_MAJOR {
        return Err(SchemaError::UnsupportedVersion {
            found: version.into(),
            supported: SCHEMA_MAJOR,
        });
    }
    let data = doc
        .get_mut("data")
        .map(Value::take)
        .ok_or(SchemaError::MissingField("data"))?;
    Ok(serde_json::from_value(data)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> ShellResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ShellError::io(path, e))?;
    from_json_str(kind, &text).map_err(|source| ShellError::Schema {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> ShellResult<()> {
    let text = to_json_string(kind, data).map_err(|source| ShellError::Schema {
        path: path.to_path_buf(),
        source,
    })?;
    write_bytes(path, text.as_bytes())
}
