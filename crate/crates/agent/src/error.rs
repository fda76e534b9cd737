use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("config {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Sim(#[from] ran_sim::SimError),
    #[error(transparent)]
    Tgn(#[from] tgn::TgnError),
    #[error(transparent)]
    Nn(#[from] tape_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AgentError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        AgentError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, AgentError>;
