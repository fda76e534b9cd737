use std::collections::BTreeMap;

use proptest::prelude::*;
use ran_sim::{SimConfig, World};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tape_nn::gradcheck::{check_inputs, check_params};
use tape_nn::{Group, ParamStore, Tape, Tensor};
use tgn::synthetic::{batches, stationary_stream};
use tgn::*;

const PERIOD: u64 = 120_000;

fn encoder(n_ues: usize, n_cells: usize, seed: u64) -> (ParamStore, TgnEncoder) {
    let mut store = ParamStore::default();
    let cfg = TgnConfig::default();
    let params = TgnParams::new(&cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (store, TgnEncoder::new(cfg, params, n_ues, n_cells))
}

fn node_event(node: NodeRef, t: u64, v: f64) -> GraphEvent {
    let n = match node {
        NodeRef::Ue(_) => 13,
        NodeRef::Cell(_) => 6,
    };
    GraphEvent::Node(NodeEvent {
        node,
        timestamp_us: t,
        features: vec![v; n],
    })
}

fn edge_event(ue: usize, cell: usize, t: u64, v: f64) -> GraphEvent {
    GraphEvent::Edge(EdgeEvent {
        ue,
        cell,
        timestamp_us: t,
        features: vec![v, 1.0 - v, v * 0.5, 1.0],
    })
}

#[test]
fn no_messages_leave_the_bank_unchanged() {
    let (store, mut enc) = encoder(2, 2, 0);
    enc.ingest(&store, &[node_event(NodeRef::Ue(0), 0, 0.3)])
        .unwrap();
    let before = enc.bank().clone();
    enc.update_memory(&store, &BTreeMap::new()).unwrap();
    enc.ingest(&store, &[]).unwrap();
    assert_eq!(enc.bank(), &before);
}

#[test]
fn one_message_changes_only_its_node() {
    let (store, mut enc) = encoder(2, 2, 0);
    let before = enc.bank().clone();
    let s = enc
        .ingest(&store, &[node_event(NodeRef::Cell(1), 10_000, 0.7)])
        .unwrap();
    assert_eq!(s.updated, vec![3]);
    for n in 0..4 {
        let changed = enc.bank().memory(n) != before.memory(n);
        assert_eq!(changed, n == 3, "node {n}");
    }
    assert_eq!(enc.bank().last_event_us(3), Some(10_000));
    assert_eq!(enc.bank().last_event_us(0), None);
}

#[test]
fn replaying_a_stream_from_zero_is_deterministic() {
    let events = stationary_stream(3, 2, 20, PERIOD, 5);
    let (store, mut a) = encoder(3, 2, 1);
    let mut b = a.clone();
    a.ingest(&store, &events).unwrap();
    b.ingest(&store, &events).unwrap();
    assert_eq!(a.bank(), b.bank());
    // resetting returns to the zero state and reproduces the same bank
    let first = a.bank().clone();
    a.reset();
    assert!((0..5).all(|n| a.bank().memory(n).iter().all(|&v| v == 0.0)));
    a.ingest(&store, &events).unwrap();
    assert_eq!(a.bank(), &first);
    assert_eq!(
        a.embed_all(&store, 3_000_000).unwrap(),
        b.embed_all(&store, 3_000_000).unwrap()
    );
}

#[test]
fn empty_cache_reads_zero_attention() {
    let (store, mut enc) = encoder(1, 1, 2);
    enc.ingest(&store, &[node_event(NodeRef::Ue(0), 0, 0.4)])
        .unwrap();
    let input = enc.embed_input(0, 50_000);
    assert!(input.neighbors.is_empty());
    let z = enc.embed_value(&store, 0, 50_000).unwrap();
    // Independent path: MLP([h + kind_ue || 0]).
    let p = enc.params();
    let t = Tape::new();
    let kind = store.value(p.kind_embedding).row_slice(0).to_vec();
    let hq: Vec<f64> = enc
        .bank()
        .memory(0)
        .iter()
        .zip(&kind)
        .map(|(a, b)| a + b)
        .collect();
    let mut x = hq;
    x.extend(vec![0.0; enc.config().attention_dim]);
    let expect = t.value(p.head.forward(&t, &store, t.constant_row(x)).unwrap());
    for (a, b) in z.iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn every_embedding_has_32_dims() {
    let (store, mut enc) = encoder(3, 2, 3);
    enc.ingest(&store, &stationary_stream(3, 2, 4, PERIOD, 0))
        .unwrap();
    for z in enc.embed_all(&store, 500_000).unwrap() {
        assert_eq!(z.len(), 32);
        assert!(z.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn identical_histories_give_identical_embeddings() {
    let (store, mut enc) = encoder(2, 1, 4);
    let events = vec![
        edge_event(0, 0, 0, 0.6),
        edge_event(1, 0, 0, 0.6),
        node_event(NodeRef::Ue(0), 0, 0.2),
        node_event(NodeRef::Ue(1), 0, 0.2),
    ];
    enc.ingest(&store, &events).unwrap();
    let z = enc.embed_all(&store, 90_000).unwrap();
    assert_eq!(z[0], z[1]);
}

#[test]
fn replayed_gru_step_matches_stored_memory() {
    let (store, mut enc) = encoder(2, 2, 5);
    enc.ingest(&store, &stationary_stream(2, 2, 6, PERIOD, 1))
        .unwrap();
    for n in 0..4 {
        let input = enc.embed_input(n, 700_000);
        let u = input.last_update.clone().unwrap();
        let t = Tape::new();
        let h = enc
            .params()
            .gru
            .forward(
                &t,
                &store,
                t.constant_row(u.message),
                t.constant_row(u.h_prev),
            )
            .unwrap();
        for (a, b) in t.value(h).data().iter().zip(enc.bank().memory(n)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn stale_node_keeps_memory_but_embedding_tracks_time() {
    let (store, mut enc) = encoder(1, 2, 6);
    enc.ingest(
        &store,
        &[edge_event(0, 0, 0, 0.5), edge_event(0, 1, 0, 0.3)],
    )
    .unwrap();
    let h = enc.bank().memory(0).to_vec();
    let z1 = enc.embed_value(&store, 0, 120_000).unwrap();
    let z2 = enc.embed_value(&store, 0, 5_000_000).unwrap();
    // unrelated events elsewhere do not touch node 0's memory
    enc.ingest(&store, &[node_event(NodeRef::Cell(1), 200_000, 0.9)])
        .unwrap();
    assert_eq!(enc.bank().memory(0), h.as_slice());
    assert_ne!(z1, z2);
    // only the phi(now - t_j) columns of the neighbor rows move
    let a = enc.embed_input(0, 120_000);
    let b = enc.embed_input(0, 5_000_000);
    let mem_edge = enc.config().memory_dim + enc.config().edge_dim();
    for (ra, rb) in a.neighbors.iter().zip(&b.neighbors) {
        assert_eq!(ra[..mem_edge], rb[..mem_edge]);
        assert_ne!(ra[mem_edge..], rb[mem_edge..]);
    }
}

#[test]
fn out_of_order_stream_is_rejected() {
    let (store, mut enc) = encoder(1, 1, 0);
    let events = vec![
        node_event(NodeRef::Ue(0), 200, 0.1),
        node_event(NodeRef::Ue(0), 100, 0.1),
    ];
    assert!(enc.ingest(&store, &events).is_err());
}

#[test]
fn link_loss_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        // w.r.t. the embeddings themselves, 4 pairs over 4 vectors
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zs: Vec<Tensor> = (0..4)
            .map(|_| {
                Tensor::row(
                    (0..6)
                        .map(|_| rand::Rng::random_range(&mut rng, -1.5..1.5))
                        .collect(),
                )
            })
            .collect();
        let pairs = [(0, 2, true), (1, 3, true), (0, 3, false), (1, 2, false)];
        let report = check_inputs(
            |t, v| {
                Ok(link_prediction_loss(t, v, &pairs)
                    .map_err(|e| tape_nn::NnError::Invalid(e.to_string()))?
                    .unwrap())
            },
            &zs,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "seed {seed}: {report:?}");
    }
}

#[test]
fn link_loss_parameter_gradients_match_finite_differences() {
    let events = stationary_stream(2, 3, 3, PERIOD, 9);
    for seed in 0..3u64 {
        let (mut store, mut enc) = encoder(2, 3, seed);
        let s = enc.ingest(&store, &events).unwrap();
        let batch = enc
            .link_batch(
                400_000,
                &s.interactions,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
        assert_eq!(batch.pairs.len(), 4);
        let p = enc.params();
        let ids = vec![
            p.kind_embedding,
            p.gru.bx,
            p.attention.key.b,
            p.head.layers().last().unwrap().w,
        ];
        let report = check_params(
            &mut store,
            &ids,
            |t, st| {
                Ok(enc
                    .link_loss(t, st, &batch)
                    .map_err(|e| tape_nn::NnError::Invalid(e.to_string()))?
                    .unwrap())
            },
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "seed {seed}: {report:?}");
    }
}

fn train_link(disable_steps: bool) -> (f64, f64) {
    let (n_ues, n_cells) = (4, 3);
    let (mut store, mut enc) = encoder(n_ues, n_cells, 11);
    let events = stationary_stream(n_ues, n_cells, 400, PERIOD, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut losses = Vec::new();
    for batch in batches(&events).into_iter().take(201) {
        let s = enc.ingest(&store, batch).unwrap();
        let now = batch[0].timestamp_us();
        let lb = enc.link_batch(now, &s.interactions, &mut rng).unwrap();
        let t = Tape::new();
        let loss = enc.link_loss(&t, &store, &lb).unwrap().unwrap();
        losses.push(t.scalar(loss));
        if !disable_steps {
            t.backward_into(loss, &mut store, 1.0).unwrap();
            store.step(Group::Encoder).unwrap();
        }
    }
    let head = losses[..5].iter().sum::<f64>() / 5.0;
    let tail = losses[losses.len() - 5..].iter().sum::<f64>() / 5.0;
    (head, tail)
}

#[test]
fn link_prediction_loss_falls_on_a_stationary_stream() {
    let (head, tail) = train_link(false);
    assert!(tail < 0.5 * head, "{head} -> {tail}");
    let (h0, t0) = train_link(true);
    assert!(
        t0 > 0.5 * h0,
        "untrained loss should not halve: {h0} -> {t0}"
    );
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn embeddings_of_a_smooth_trajectory_are_temporally_consistent() {
    let (store, mut enc) = encoder(1, 2, 7);
    let mut zs = Vec::new();
    for k in 0..80u64 {
        let t = k * PERIOD;
        let x = k as f64 / 79.0; // UE walks from cell 0 to cell 1
        let events = vec![
            edge_event(0, 0, t, 0.8 - 0.6 * x),
            edge_event(0, 1, t, 0.2 + 0.6 * x),
            node_event(NodeRef::Ue(0), t, 0.3 + 0.4 * x),
        ];
        enc.ingest(&store, &events).unwrap();
        zs.push(enc.embed_value(&store, 0, t).unwrap());
    }
    let mean = |lag: &dyn Fn(usize) -> bool| {
        let mut s = 0.0;
        let mut n = 0;
        for i in 0..zs.len() {
            for j in i + 1..zs.len() {
                if lag(j - i) {
                    s += cosine(&zs[i], &zs[j]);
                    n += 1;
                }
            }
        }
        s / n as f64
    };
    let adjacent = mean(&|d| d == 1);
    let far = mean(&|d| d >= 10);
    assert!(adjacent > far, "{adjacent} vs {far}");
}

#[test]
fn csv_dump_replays_a_simulated_stream_exactly() {
    let cfg: SimConfig = serde_json::from_str(
        r#"{"seed": 3,
            "cells": [{"position": [0, 0], "prb_capacity": 50, "background_load": 0.2},
                      {"position": [200, 0], "prb_capacity": 50, "background_load": 0.2}],
            "ues": [{"mobility": {"waypoints": [[40, 5], [160, 5]], "speed_mps": 10},
                     "traffic": {"kind": "persistent", "ul_mbps": 1, "dl_mbps": 2, "packet_bytes": 500}}]}"#,
    )
    .unwrap();
    let mut world = World::new(cfg).unwrap();
    let mut reports = world.emit_kpm();
    for _ in 0..600 {
        world.step();
        reports.extend(world.take_kpm());
    }
    let events = build_stream(&reports).unwrap();
    assert!(events.iter().any(|e| matches!(e, GraphEvent::Edge(_))));
    let mut buf = Vec::new();
    write_events_csv(&mut buf, &events).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("kind,src,dst,timestamp_us,features"));
    let replay = read_events_csv(buf.as_slice()).unwrap();
    assert_eq!(replay, events);

    let (store, mut a) = encoder(1, 2, 8);
    let mut b = a.clone();
    a.ingest(&store, &events).unwrap();
    b.ingest(&store, &replay).unwrap();
    assert_eq!(
        a.embed_all(&store, 600_000).unwrap(),
        b.embed_all(&store, 600_000).unwrap()
    );
}

#[test]
fn malformed_csv_rows_are_schema_errors() {
    let bad = "kind,src,dst,timestamp_us,features\nedge,0,,5,0.1;0.2;0.3;0.4\n";
    assert!(
        matches!(read_events_csv(bad.as_bytes()), Err(TgnError::Schema(m)) if m.contains("line 2"))
    );
    let short = "kind,src,dst,timestamp_us,features\ncell,0,,5,0.1\n";
    assert!(read_events_csv(short.as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_keeps_the_latest_per_node(ts in proptest::collection::vec((0usize..4, 0u64..5), 1..30)) {
        let msgs: Vec<Message> = ts.iter().enumerate().map(|(seq, &(node, t))| Message {
            node, timestamp_us: t, seq, kind: MessageKind::UeNode, vector: vec![seq as f64],
        }).collect();
        let agg = aggregate_most_recent(msgs.clone());
        for (node, m) in &agg {
            let best = msgs.iter().filter(|x| x.node == *node).max_by_key(|x| (x.timestamp_us, x.seq)).unwrap();
            prop_assert_eq!(m, best);
        }
        let nodes: std::collections::BTreeSet<usize> = ts.iter().map(|p| p.0).collect();
        prop_assert_eq!(agg.len(), nodes.len());
    }

    #[test]
    fn pooling_is_permutation_invariant(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..8), seed in 0u64..1000) {
        let mut shuffled = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = graph_embedding(&rows).unwrap();
        let b = graph_embedding(&shuffled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn message_length_is_fixed(v in 0.0f64..1.0, ue in 0usize..3, cell in 0usize..2, t in 0u64..1_000_000) {
        let cfg = TgnConfig::default();
        let bank = MemoryBank::new(cfg.memory_dim, 3, 2);
        for e in [edge_event(ue, cell, t, v), node_event(NodeRef::Ue(ue), t, v), node_event(NodeRef::Cell(cell), t, v)] {
            for m in make_messages(&cfg, &bank, &e, 0).unwrap() {
                prop_assert_eq!(m.vector.len(), cfg.message_dim());
            }
        }
    }
}
