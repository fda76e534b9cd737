use thiserror::Error;

#[derive(Debug, Error)]
pub enum TgnError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("stream order: node {node} last saw t={last_us}us, event at t={t_us}us")]
    StreamOrder {
        node: usize,
        last_us: u64,
        t_us: u64,
    },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("graph embedding over zero nodes")]
    EmptyGraph,
    #[error("config {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Nn(#[from] tape_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TgnError>;
