//! Experiment runner for the handover controllers: JSON experiment specs,
//! train/eval/compare/ablate/analyze jobs, nearest-rank percentile tables
//! and embedding analysis exports.

pub mod analysis;
mod error;
pub mod runner;
pub mod spec;
pub mod stats;

pub use analysis::{
    analyze_embeddings, cosine_matrix, cosine_similarity, power_iteration, EmbeddingAnalysis, Pca,
};
pub use error::{LabError, Result};
pub use runner::{config_hash, percentile_table, run, Artifacts, RunRow, TableRow, PERCENTILES};
pub use spec::{Assignment, ExperimentSpec, Mode, ScenarioSource, TrafficCase};
pub use stats::{median, percentiles};
