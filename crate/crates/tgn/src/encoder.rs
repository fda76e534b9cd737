use std::collections::BTreeMap;

use rand::Rng;
use tape_nn::layers::{GruCell, Mlp, MultiHeadAttention};
use tape_nn::{Group, ParamId, ParamStore, Tape, Tensor, Var};

use crate::config::TgnConfig;
use crate::error::{Result, TgnError};
use crate::events::{GraphEvent, NodeKind, NodeRef};
use crate::loss::{link_prediction_loss, sample_negatives};
use crate::memory::{MemoryBank, NeighborCache, NeighborEntry};
use crate::message::{aggregate_most_recent, make_messages, Message};
use crate::time::encode_time;

/// Encoder weights (all in the encoder parameter group).
#[derive(Clone, Debug)]
pub struct TgnParams {
    pub gru: GruCell,
    /// `[2, memory_dim]`, row per node kind, added to `h_i` before read-out.
    pub kind_embedding: ParamId,
    pub attention: MultiHeadAttention,
    pub head: Mlp,
}

impl TgnParams {
    pub fn new(cfg: &TgnConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.memory_dim;
        let g = Group::Encoder;
        let kind = Tensor::matrix(
            2,
            m,
            (0..2 * m).map(|_| rng.random_range(-0.1..0.1)).collect(),
        )?;
        Ok(TgnParams {
            gru: GruCell::new(store, "tgn.gru", g, cfg.message_dim(), m, rng)?,
            kind_embedding: store.add("tgn.kind", g, kind)?,
            attention: MultiHeadAttention::new(
                store,
                "tgn.attn",
                g,
                m,
                cfg.neighbor_dim(),
                cfg.attention_dim,
                cfg.attention_dim,
                cfg.heads,
                rng,
            )?,
            head: Mlp::new(
                store,
                "tgn.head",
                g,
                &[m + cfg.attention_dim, cfg.head_hidden, cfg.embedding_dim],
                false,
                false,
                rng,
            )?,
        })
    }
}

/// Inputs of the most recent memory update of a node, kept so the final
/// GRU step can be replayed on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct GruInput {
    pub message: Vec<f64>,
    pub h_prev: Vec<f64>,
}

/// Everything `z_i(now)` depends on besides the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedInput {
    pub kind: NodeKind,
    pub memory: Vec<f64>,
    pub last_update: Option<GruInput>,
    /// Key/value rows `[h_j(t_j^-) || x_ij || phi(now - t_j)]`.
    pub neighbors: Vec<Vec<f64>>,
}

/// What one call to [`TgnEncoder::ingest`] touched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestSummary {
    pub updated: Vec<usize>,
    /// `(ue, cell)` ids of every edge event, in stream order.
    pub interactions: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct TgnEncoder {
    cfg: TgnConfig,
    params: TgnParams,
    bank: MemoryBank,
    cache: NeighborCache,
    last_update: Vec<Option<GruInput>>,
}

impl TgnEncoder {
    pub fn new(cfg: TgnConfig, params: TgnParams, n_ues: usize, n_cells: usize) -> Self {
        let n = n_ues + n_cells;
        TgnEncoder {
            bank: MemoryBank::new(cfg.memory_dim, n_ues, n_cells),
            cache: NeighborCache::new(cfg.neighbor_capacity, n),
            last_update: vec![None; n],
            cfg,
            params,
        }
    }

    pub fn config(&self) -> &TgnConfig {
        &self.cfg
    }

    pub fn params(&self) -> &TgnParams {
        &self.params
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn cache(&self) -> &NeighborCache {
        &self.cache
    }

    pub fn n_nodes(&self) -> usize {
        self.bank.len()
    }

    /// Zeroes memories and clears neighbor caches; weights are untouched.
    pub fn reset(&mut self) {
        self.bank.reset();
        self.cache.reset();
        self.last_update.iter_mut().for_each(|u| *u = None);
    }

    /// Processes a timestamp-ordered stream, one batch per distinct
    /// timestamp: messages and cache snapshots read `t^-` memories, then the
    /// aggregated messages update memory.
    pub fn ingest(&mut self, store: &ParamStore, events: &[GraphEvent]) -> Result<IngestSummary> {
        let mut summary = IngestSummary::default();
        let mut start = 0;
        while start < events.len() {
            let t = events[start].timestamp_us();
            let mut end = start;
            while end < events.len() && events[end].timestamp_us() == t {
                end += 1;
            }
            if end < events.len() && events[end].timestamp_us() < t {
                return Err(TgnError::Schema(format!(
                    "event at t={}us follows t={t}us",
                    events[end].timestamp_us()
                )));
            }
            self.ingest_batch(store, &events[start..end], &mut summary)?;
            start = end;
        }
        summary.updated.sort_unstable();
        summary.updated.dedup();
        Ok(summary)
    }

    fn ingest_batch(
        &mut self,
        store: &ParamStore,
        batch: &[GraphEvent],
        summary: &mut IngestSummary,
    ) -> Result<()> {
        let mut messages: Vec<Message> = Vec::new();
        let mut entries = Vec::new();
        for (seq, e) in batch.iter().enumerate() {
            messages.extend(make_messages(&self.cfg, &self.bank, e, seq)?);
            if let GraphEvent::Edge(edge) = e {
                let i = self.bank.index(NodeRef::Ue(edge.ue))?;
                let j = self.bank.index(NodeRef::Cell(edge.cell))?;
                for (a, b) in [(i, j), (j, i)] {
                    entries.push((
                        a,
                        NeighborEntry {
                            other: b,
                            t_us: edge.timestamp_us,
                            features: edge.features.clone(),
                            other_memory: self.bank.memory(b).to_vec(),
                        },
                    ));
                }
                summary.interactions.push((edge.ue, edge.cell));
            }
        }
        let aggregated = aggregate_most_recent(messages);
        summary.updated.extend(aggregated.keys().copied());
        self.update_memory(store, &aggregated)?;
        for (node, entry) in entries {
            self.cache.push(node, entry);
        }
        Ok(())
    }

    /// Batched GRU step for every node with a message. Nodes without one
    /// keep their memory and last event time.
    pub fn update_memory(
        &mut self,
        store: &ParamStore,
        aggregated: &BTreeMap<usize, Message>,
    ) -> Result<()> {
        if aggregated.is_empty() {
            return Ok(());
        }
        let msgs: Vec<Vec<f64>> = aggregated.values().map(|m| m.vector.clone()).collect();
        let prev: Vec<Vec<f64>> = aggregated
            .keys()
            .map(|&i| self.bank.memory(i).to_vec())
            .collect();
        let tape = Tape::new();
        let m = tape.leaf(Tensor::from_rows(&msgs)?);
        let h = tape.leaf(Tensor::from_rows(&prev)?);
        let out = tape.value(self.params.gru.forward(&tape, store, m, h)?);
        for (r, ((msg, message), h_prev)) in aggregated.values().zip(msgs).zip(prev).enumerate() {
            self.bank
                .set(msg.node, out.row_slice(r).to_vec(), msg.timestamp_us);
            self.last_update[msg.node] = Some(GruInput { message, h_prev });
        }
        Ok(())
    }

    pub fn embed_input(&self, node: usize, now_us: u64) -> EmbedInput {
        let neighbors = self
            .cache
            .neighbors(node)
            .iter()
            .map(|e| {
                let mut row = e.other_memory.clone();
                row.extend_from_slice(&e.features);
                row.extend(encode_time(
                    now_us.saturating_sub(e.t_us),
                    self.cfg.time_dim,
                ));
                row
            })
            .collect();
        EmbedInput {
            kind: self.bank.kind(node),
            memory: self.bank.memory(node).to_vec(),
            last_update: self.last_update[node].clone(),
            neighbors,
        }
    }

    /// `z_i = MLP([h_i + kind || attention(h_i + kind, neighbors)])`, with
    /// the attention read-out zero when there are no neighbors. The last
    /// memory update is replayed so gradients reach the GRU.
    pub fn embed(&self, tape: &Tape, store: &ParamStore, input: &EmbedInput) -> Result<Var> {
        let h = match &input.last_update {
            Some(u) => self.params.gru.forward(
                tape,
                store,
                tape.constant_row(u.message.clone()),
                tape.constant_row(u.h_prev.clone()),
            )?,
            None => tape.constant_row(input.memory.clone()),
        };
        let kind = tape.slice_rows(
            tape.param(store, self.params.kind_embedding),
            input.kind.index(),
            1,
        )?;
        let q = tape.add(h, kind)?;
        let read = if input.neighbors.is_empty() {
            tape.constant_row(vec![0.0; self.cfg.attention_dim])
        } else {
            let kv = tape.leaf(Tensor::from_rows(&input.neighbors)?);
            self.params
                .attention
                .forward(tape, store, q, kv, kv, None)?
        };
        Ok(self
            .params
            .head
            .forward(tape, store, tape.concat_cols(&[q, read])?)?)
    }

    pub fn embed_value(&self, store: &ParamStore, node: usize, now_us: u64) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let z = self.embed(&tape, store, &self.embed_input(node, now_us))?;
        Ok(tape.value(z).into_data())
    }

    pub fn embed_all(&self, store: &ParamStore, now_us: u64) -> Result<Vec<Vec<f64>>> {
        (0..self.n_nodes())
            .map(|i| self.embed_value(store, i, now_us))
            .collect()
    }
}

/// Link-prediction inputs captured at one instant, replayable on any tape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkBatch {
    pub inputs: BTreeMap<usize, EmbedInput>,
    /// `(node_a, node_b, label)` as node indices.
    pub pairs: Vec<(usize, usize, bool)>,
}

impl LinkBatch {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl TgnEncoder {
    /// Distinct `(ue, cell)` interactions as positives, each with one
    /// uniformly drawn non-interacting cell as negative.
    pub fn link_batch(
        &self,
        now_us: u64,
        interactions: &[(usize, usize)],
        rng: &mut impl Rng,
    ) -> Result<LinkBatch> {
        let positives: Vec<(usize, usize)> = interactions
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let negatives = sample_negatives(&positives, self.bank.n_cells(), rng);
        let mut batch = LinkBatch::default();
        for (list, label) in [(&positives, true), (&negatives, false)] {
            for &(ue, cell) in list {
                let a = self.bank.index(NodeRef::Ue(ue))?;
                let b = self.bank.index(NodeRef::Cell(cell))?;
                for n in [a, b] {
                    batch
                        .inputs
                        .entry(n)
                        .or_insert_with(|| self.embed_input(n, now_us));
                }
                batch.pairs.push((a, b, label));
            }
        }
        Ok(batch)
    }

    pub fn link_loss(
        &self,
        tape: &Tape,
        store: &ParamStore,
        batch: &LinkBatch,
    ) -> Result<Option<Var>> {
        if batch.is_empty() {
            return Ok(None);
        }
        let mut slot = BTreeMap::new();
        let mut z = Vec::with_capacity(batch.inputs.len());
        for (&node, input) in &batch.inputs {
            slot.insert(node, z.len());
            z.push(self.embed(tape, store, input)?);
        }
        let pairs: Vec<(usize, usize, bool)> = batch
            .pairs
            .iter()
            .map(|&(a, b, l)| (slot[&a], slot[&b], l))
            .collect();
        link_prediction_loss(tape, &z, &pairs)
    }
}

/// Mean of the node embeddings.
pub fn graph_embedding(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = embeddings.first().ok_or(TgnError::EmptyGraph)?;
    let mut g = vec![0.0; first.len()];
    for z in embeddings {
        if z.len() != g.len() {
            return Err(TgnError::Schema(format!(
                "embedding length {} vs {}",
                z.len(),
                g.len()
            )));
        }
        for (a, b) in g.iter_mut().zip(z) {
            *a += b;
        }
    }
    let n = embeddings.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok(g)
}
