//! Continuous-time graph encoder over UE and cell nodes.
//!
//! KPM reports become edge events (UE-cell radio measurements) and node
//! events (UE and cell counters). Each event produces messages, a
//! most-recent aggregator keeps one per node per timestamp, and a GRU
//! advances the node memories. Embeddings read a node's memory together
//! with a time-aware attention over its recent interactions.

mod config;
mod encoder;
mod error;
mod events;
mod loss;
mod memory;
mod message;
pub mod synthetic;
mod time;

pub use config::{TgnConfig, MESSAGE_KINDS};
pub use encoder::{
    graph_embedding, EmbedInput, GruInput, IngestSummary, LinkBatch, TgnEncoder, TgnParams,
};
pub use error::{Result, TgnError};
pub use events::{
    build_events, build_stream, read_events_csv, write_events_csv, EdgeEvent, GraphEvent,
    NodeEvent, NodeKind, NodeRef,
};
pub use loss::{link_prediction_loss, sample_negatives};
pub use memory::{MemoryBank, NeighborCache, NeighborEntry};
pub use message::{aggregate_most_recent, make_messages, Message, MessageKind};
pub use time::encode_time;
