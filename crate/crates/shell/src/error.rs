use std::path::PathBuf;

use serde_json::json;

use crate::formats::FormatError;
use crate::schema::SchemaError;

#[derive(Debug, thiserror::Error)]
pub enum ShellError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {source}", path.display())]
    Schema { path: PathBuf, source: SchemaError },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Core(#[from] lidar4d_core::Error),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<ShellError>,
    },
    #[error("{0}")]
    Usage(String),
}

pub type ShellResult<T> = std::result::Result<T, ShellError>;

impl ShellError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Format { source, .. } => source.kind(),
            Self::Schema { .. } => "schema",
            Self::Image { .. } => "image",
            Self::Core(_) => "invalid_input",
            Self::Stage { source, .. } => source.kind(),
            Self::Usage(_) => "usage",
        }
    }

    /// Path of the offending file, if any, looking through stage wrappers.
    pub fn path(&self) -> Option<&PathBuf> {
        match self {
            Self::Io { path, .. }
            | Self::Format { path, .. }
            | Self::Schema { path, .. }
            | Self::Image { path, .. } => Some(path),
            Self::Stage { source, .. } => source.path(),
            Self::Core(_) | Self::Usage(_) => None,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Self::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Machine-readable form written to stderr by the binary.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Some(p) = self.path() {
            v["path"] = json!(p.display().to_string());
        }
        if let Some(s) = self.stage() {
            v["stage"] = json!(s);
        }
        v
    }
}

/// Runs `f`, tagging any failure with the stage name.
pub fn in_stage<T>(stage: &'static str, f: impl FnOnce() -> ShellResult<T>) -> ShellResult<T> {
    f().map_err(|e| ShellError::Stage {
        stage,
        source: Box::new(e),
    })
}
