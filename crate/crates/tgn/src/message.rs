use std::collections::BTreeMap;

use crate::config::{TgnConfig, MESSAGE_KINDS};
use crate::error::{Result, TgnError};
use crate::events::{GraphEvent, NodeKind};
use crate::memory::MemoryBank;
use crate::time::encode_time;

/// Message layout flag, stored one-hot in the last `MESSAGE_KINDS` slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Edge,
    UeNode,
    CellNode,
}

impl MessageKind {
    fn slot(self) -> usize {
        match self {
            MessageKind::Edge => 0,
            MessageKind::UeNode => 1,
            MessageKind::CellNode => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub node: usize,
    pub timestamp_us: u64,
    /// Position in the input stream; breaks timestamp ties.
    pub seq: usize,
    pub kind: MessageKind,
    pub vector: Vec<f64>,
}

fn assemble(cfg: &TgnConfig, kind: MessageKind, parts: &[&[f64]]) -> Vec<f64> {
    let dim = cfg.message_dim();
    let mut v = Vec::with_capacity(dim);
    for p in parts {
        v.extend_from_slice(p);
    }
    debug_assert!(v.len() <= dim - MESSAGE_KINDS);
    v.resize(dim - MESSAGE_KINDS, 0.0);
    let mut flag = [0.0; MESSAGE_KINDS];
    flag[kind.slot()] = 1.0;
    v.extend_from_slice(&flag);
    v
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(TgnError::Schema(format!(
            "{what} has {got} features, expected {want}"
        )))
    }
}

/// Messages for one event, built from the memories as they stand (`t^-`).
/// An edge event yields the source message then the destination message.
pub fn make_messages(
    cfg: &TgnConfig,
    bank: &MemoryBank,
    event: &GraphEvent,
    seq: usize,
) -> Result<Vec<Message>> {
    match event {
        GraphEvent::Edge(e) => {
            check_len(e.features.len(), cfg.edge_dim(), "edge event")?;
            let i = bank.index(crate::NodeRef::Ue(e.ue))?;
            let j = bank.index(crate::NodeRef::Cell(e.cell))?;
            let t = e.timestamp_us;
            let phi_i = encode_time(bank.elapsed_us(i, t)?, cfg.time_dim);
            let phi_j = encode_time(bank.elapsed_us(j, t)?, cfg.time_dim);
            let (hi, hj) = (bank.memory(i), bank.memory(j));
            let x = e.features.as_slice();
            Ok(vec![
                Message {
                    node: i,
                    timestamp_us: t,
                    seq,
                    kind: MessageKind::Edge,
                    vector: assemble(cfg, MessageKind::Edge, &[hi, hj, &phi_i, x]),
                },
                Message {
                    node: j,
                    timestamp_us: t,
                    seq,
                    kind: MessageKind::Edge,
                    vector: assemble(cfg, MessageKind::Edge, &[hj, hi, &phi_j, x]),
                },
            ])
        }
        GraphEvent::Node(n) => {
            let i = bank.index(n.node)?;
            let kind = n.node.kind();
            check_len(n.features.len(), cfg.node_dim(kind), "node event")?;
            let t = n.timestamp_us;
            let phi = encode_time(bank.elapsed_us(i, t)?, cfg.time_dim);
            let mk = if kind == NodeKind::Ue {
                MessageKind::UeNode
            } else {
                MessageKind::CellNode
            };
            Ok(vec![Message {
                node: i,
                timestamp_us: t,
                seq,
                kind: mk,
                vector: assemble(cfg, mk, &[bank.memory(i), &phi, &n.features]),
            }])
        }
    }
}

/// Keeps, per node, the message with the latest timestamp; among equal
/// timestamps the one later in the stream wins.
pub fn aggregate_most_recent(
    messages: impl IntoIterator<Item = Message>,
) -> BTreeMap<usize, Message> {
    let mut out: BTreeMap<usize, Message> = BTreeMap::new();
    for m in messages {
        match out.get(&m.node) {
            Some(cur) if (cur.timestamp_us, cur.seq) > (m.timestamp_us, m.seq) => {}
            _ => {
                out.insert(m.node, m);
            }
        }
    }
    out
}
