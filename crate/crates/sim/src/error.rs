use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("unknown ue {0}")]
    UnknownUe(usize),
    #[error("unknown cell {0}")]
    UnknownCell(usize),
    #[error("handover precondition: {0}")]
    Handover(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
