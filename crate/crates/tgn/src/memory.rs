use std::collections::VecDeque;

use crate::error::{Result, TgnError};
use crate::events::{NodeKind, NodeRef};

/// Per-node memory `h_i` and last event time. UE nodes occupy indices
/// `0..n_ues`, cell nodes follow.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    dim: usize,
    n_ues: usize,
    n_cells: usize,
    memory: Vec<Vec<f64>>,
    last_event_us: Vec<Option<u64>>,
}

impl MemoryBank {
    pub fn new(dim: usize, n_ues: usize, n_cells: usize) -> Self {
        let n = n_ues + n_cells;
        MemoryBank {
            dim,
            n_ues,
            n_cells,
            memory: vec![vec![0.0; dim]; n],
            last_event_us: vec![None; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn index(&self, node: NodeRef) -> Result<usize> {
        match node {
            NodeRef::Ue(i) if i < self.n_ues => Ok(i),
            NodeRef::Cell(j) if j < self.n_cells => Ok(self.n_ues + j),
            _ => Err(TgnError::UnknownNode(format!("{node:?}"))),
        }
    }

    pub fn node(&self, index: usize) -> NodeRef {
        if index < self.n_ues {
            NodeRef::Ue(index)
        } else {
            NodeRef::Cell(index - self.n_ues)
        }
    }

    pub fn kind(&self, index: usize) -> NodeKind {
        self.node(index).kind()
    }

    pub fn memory(&self, index: usize) -> &[f64] {
        &self.memory[index]
    }

    pub fn last_event_us(&self, index: usize) -> Option<u64> {
        self.last_event_us[index]
    }

    /// `t - last_event_time`, zero for a node's first event.
    pub fn elapsed_us(&self, index: usize, t_us: u64) -> Result<u64> {
        match self.last_event_us[index] {
            None => Ok(0),
            Some(last) if t_us >= last => Ok(t_us - last),
            Some(last) => Err(TgnError::StreamOrder {
                node: index,
                last_us: last,
                t_us,
            }),
        }
    }

    pub(crate) fn set(&mut self, index: usize, h: Vec<f64>, t_us: u64) {
        debug_assert_eq!(h.len(), self.dim);
        self.memory[index] = h;
        self.last_event_us[index] = Some(t_us);
    }

    pub fn reset(&mut self) {
        self.memory
            .iter_mut()
            .for_each(|h| h.iter_mut().for_each(|v| *v = 0.0));
        self.last_event_us.iter_mut().for_each(|t| *t = None);
    }
}

/// One past interaction seen from node `i`: the other endpoint, when it
/// happened, the edge features and the other node's memory just before it.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborEntry {
    pub other: usize,
    pub t_us: u64,
    pub features: Vec<f64>,
    pub other_memory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborCache {
    capacity: usize,
    entries: Vec<VecDeque<NeighborEntry>>,
}

impl NeighborCache {
    pub fn new(capacity: usize, n_nodes: usize) -> Self {
        NeighborCache {
            capacity,
            entries: vec![VecDeque::with_capacity(capacity); n_nodes],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest entry once full. Entries arrive in
    /// stream order so the buffer stays sorted by time.
    pub fn push(&mut self, node: usize, entry: NeighborEntry) {
        let q = &mut self.entries[node];
        debug_assert!(q.back().is_none_or(|b| b.t_us <= entry.t_us));
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(entry);
    }

    pub fn neighbors(&self, node: usize) -> &VecDeque<NeighborEntry> {
        &self.entries[node]
    }

    pub fn reset(&mut self) {
        self.entries.iter_mut().for_each(VecDeque::clear);
    }
}
