//! Stationary synthetic event streams for exercising the encoder without a
//! simulator.

use ran_sim::kpm::feature;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::events::{EdgeEvent, GraphEvent, NodeEvent, NodeRef};

/// `steps` rounds spaced `period_us` apart. In every round UE `u` reports
/// an edge to cell `u % n_cells` (fixed per-pair features plus small
/// noise) and every node reports its own fixed profile plus noise.
pub fn stationary_stream(
    n_ues: usize,
    n_cells: usize,
    steps: usize,
    period_us: u64,
    seed: u64,
) -> Vec<GraphEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profile =
        |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.1..0.9)).collect() };
    let edge_base: Vec<Vec<f64>> = (0..n_ues).map(|_| profile(feature::EDGE.len())).collect();
    let ue_base: Vec<Vec<f64>> = (0..n_ues).map(|_| profile(feature::UE.len())).collect();
    let cell_base: Vec<Vec<f64>> = (0..n_cells).map(|_| profile(feature::CELL.len())).collect();
    let noisy = |base: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        base.iter()
            .map(|v| (v + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0))
            .collect()
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut out = Vec::with_capacity(steps * (2 * n_ues + n_cells));
    for s in 0..steps {
        let t = s as u64 * period_us;
        for u in 0..n_ues {
            out.push(GraphEvent::Edge(EdgeEvent {
                ue: u,
                cell: u % n_cells,
                timestamp_us: t,
                features: noisy(&edge_base[u], &mut noise_rng),
            }));
        }
        for u in 0..n_ues {
            out.push(GraphEvent::Node(NodeEvent {
                node: NodeRef::Ue(u),
                timestamp_us: t,
                features: noisy(&ue_base[u], &mut noise_rng),
            }));
        }
        for c in 0..n_cells {
            out.push(GraphEvent::Node(NodeEvent {
                node: NodeRef::Cell(c),
                timestamp_us: t,
                features: noisy(&cell_base[c], &mut noise_rng),
            }));
        }
    }
    out
}

/// Splits a stream into per-timestamp slices.
pub fn batches(events: &[GraphEvent]) -> Vec<&[GraphEvent]> {
    events
        .chunk_by(|a, b| a.timestamp_us() == b.timestamp_us())
        .collect()
}
