use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// Malformed or inconsistent experiment spec; `at` names the line and
    /// field when known.
    #[error("invalid spec at {at}: {reason}")]
    Spec { at: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("analysis: {0}")]
    Analysis(String),
    #[error(transparent)]
    Agent(#[from] ho_agent::AgentError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn spec(at: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Spec {
            at: at.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
