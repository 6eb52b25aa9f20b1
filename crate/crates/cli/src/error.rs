use std::fmt;
use std::path::{Path, PathBuf};

use noisefed_core::SimError;
use serde::Serialize;

/// A failure reported as a single JSON line on stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, path: Option<&Path>, message: impl fmt::Display) -> Self {
        let message = message.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        Self { kind: kind.to_string(), path: path.map(Path::to_path_buf), message }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new("io", Some(path), err)
    }

    pub fn sim(path: Option<&Path>, err: &SimError) -> Self {
        Self::new(err.kind(), path, err)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = serde_json::to_string(&serde_json::json!({ "error": self })).map_err(|_| fmt::Error)?;
        f.write_str(&line)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;
