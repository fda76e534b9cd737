use ran_sim::kpm::feature;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgnError};

/// Message kinds appended as a one-hot flag after padding.
pub const MESSAGE_KINDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TgnConfig {
    pub memory_dim: usize,
    pub embedding_dim: usize,
    pub time_dim: usize,
    pub heads: usize,
    /// Width of the attention read-out `h~`.
    pub attention_dim: usize,
    pub head_hidden: usize,
    pub neighbor_capacity: usize,
}

impl Default for TgnConfig {
    fn default() -> Self {
        TgnConfig {
            memory_dim: 16,
            embedding_dim: 32,
            time_dim: 8,
            heads: 2,
            attention_dim: 16,
            head_hidden: 64,
            neighbor_capacity: 10,
        }
    }
}

impl TgnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("memory_dim", self.memory_dim),
            ("embedding_dim", self.embedding_dim),
            ("time_dim", self.time_dim),
            ("heads", self.heads),
            ("attention_dim", self.attention_dim),
            ("head_hidden", self.head_hidden),
            ("neighbor_capacity", self.neighbor_capacity),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(TgnError::Config {
                    field,
                    reason: "must be > 0".into(),
                });
            }
        }
        if self.attention_dim % self.heads != 0 {
            return Err(TgnError::Config {
                field: "heads",
                reason: format!(
                    "{} heads do not divide attention_dim {}",
                    self.heads, self.attention_dim
                ),
            });
        }
        Ok(())
    }

    pub fn edge_dim(&self) -> usize {
        feature::EDGE.len()
    }

    pub fn node_dim(&self, kind: crate::NodeKind) -> usize {
        match kind {
            crate::NodeKind::Ue => feature::UE.len(),
            crate::NodeKind::Cell => feature::CELL.len(),
        }
    }

    /// Common length of every message, including the kind flag.
    pub fn message_dim(&self) -> usize {
        let m = self.memory_dim;
        let t = self.time_dim;
        let edge = 2 * m + t + self.edge_dim();
        let ue = m + t + feature::UE.len();
        let cell = m + t + feature::CELL.len();
        edge.max(ue).max(cell) + MESSAGE_KINDS
    }

    /// Width of one key/value row: `[h_j || x_ij || phi(dt)]`.
    pub fn neighbor_dim(&self) -> usize {
        self.memory_dim + self.edge_dim() + self.time_dim
    }
}
