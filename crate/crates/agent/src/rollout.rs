use std::collections::BTreeMap;

use ran_sim::radio::argmax;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tape_nn::Tape;
use tgn::{build_stream, graph_embedding, LinkBatch, NodeRef, TgnEncoder};

use crate::env::{EnvMetrics, HoEnv};
use crate::error::{AgentError, Result};
use crate::mask::ActionMask;
use crate::model::{Model, Observation};
use crate::policy::{log_prob, sample_action, DecisionRecord, HandoverAction, PolicyValues};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Draw from the masked policy.
    #[default]
    Sample,
    /// Most likely trigger and target.
    Greedy,
}

/// One agent decision with everything the update replays.
#[derive(Clone, Debug)]
pub struct Transition {
    pub ue: usize,
    pub obs: Observation,
    pub g: Vec<f64>,
    pub mask: ActionMask,
    pub action: HandoverAction,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub advantage: f64,
    pub ret: f64,
}

/// Observations of all learned UEs at one decision instant.
#[derive(Clone, Debug)]
pub struct Observed {
    pub now_us: u64,
    pub obs: BTreeMap<usize, (Observation, Vec<f64>)>,
    pub link: LinkBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingRow {
    pub ue_id: usize,
    pub timestamp_ms: f64,
    pub z: Vec<f64>,
}

/// Agent-side state of one simulator instance.
#[derive(Clone, Debug)]
pub struct AgentRunner {
    encoder: TgnEncoder,
    rngs: BTreeMap<usize, ChaCha8Rng>,
    link_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl AgentRunner {
    pub fn new(model: &Model, env: &HoEnv, seed: u64) -> Result<Self> {
        let n_cells = env.world().cells().len();
        if n_cells != model.n_cells {
            return Err(AgentError::config(
                "controllers",
                format!(
                    "model built for {} cells, scenario has {n_cells}",
                    model.n_cells
                ),
            ));
        }
        let n_ues = env.world().ues().len();
        let encoder = TgnEncoder::new(
            model.cfg.tgn.clone(),
            model.encoder.params().clone(),
            n_ues,
            n_cells,
        );
        let rngs = env
            .learned_ues()
            .into_iter()
            .map(|ue| (ue, stream(seed, (4 << 20) + ue as u64)))
            .collect();
        Ok(AgentRunner {
            encoder,
            rngs,
            link_rng: stream(seed, 5 << 20),
        })
    }

    pub fn encoder(&self) -> &TgnEncoder {
        &self.encoder
    }

    /// Feeds pending KPM into the encoder and builds every learned UE's
    /// observation. Call once per decision.
    pub fn observe(&mut self, model: &Model, env: &mut HoEnv) -> Result<Observed> {
        let reports = env.take_reports();
        let events = build_stream(&reports)?;
        let summary = self.encoder.ingest(&model.store, &events)?;
        let now = env.now_us();
        let link = self
            .encoder
            .link_batch(now, &summary.interactions, &mut self.link_rng)?;
        let learned = env.learned_ues();
        let width = model.cfg.policy.obs_dim;
        let mut obs = BTreeMap::new();
        let mut snapshots = Vec::new();
        let mut graph_ues = false;
        for &ue in &learned {
            let o = if env.kind(ue).uses_snapshot() {
                let v = env.snapshot_observation(ue, width)?;
                snapshots.push(v.clone());
                Observation::Snapshot(v)
            } else {
                graph_ues = true;
                let node = self.encoder.bank().index(NodeRef::Ue(ue))?;
                Observation::Graph(self.encoder.embed_input(node, now))
            };
            obs.insert(ue, o);
        }
        let g_graph = if graph_ues {
            graph_embedding(&self.encoder.embed_all(&model.store, now)?)?
        } else {
            Vec::new()
        };
        let g_snap = if snapshots.is_empty() {
            Vec::new()
        } else {
            graph_embedding(&snapshots)?
        };
        let obs = obs
            .into_iter()
            .map(|(ue, o)| {
                let g = if matches!(o, Observation::Snapshot(_)) {
                    g_snap.clone()
                } else {
                    g_graph.clone()
                };
                (ue, (o, g))
            })
            .collect();
        Ok(Observed {
            now_us: now,
            obs,
            link,
        })
    }

    /// Picks and applies one action per learned UE. Rewards are filled in
    /// by the caller after the environment advances.
    pub fn act(
        &mut self,
        model: &Model,
        env: &mut HoEnv,
        observed: &Observed,
        selection: Selection,
    ) -> Result<Vec<(Transition, DecisionRecord, Vec<f64>)>> {
        let mut out = Vec::with_capacity(observed.obs.len());
        for (&ue, (obs, g)) in &observed.obs {
            let mask = env.mask(ue);
            let tape = Tape::new();
            let z = model.observe(&tape, obs)?;
            let policy = model.actor.forward(&tape, &model.store, z, &mask)?;
            let values = PolicyValues::read(&tape, &policy, model.n_cells);
            let serving = env.world().ue(ue).serving;
            let rng = self.rngs.get_mut(&ue).expect("rng per learned UE");
            let mut action = match selection {
                Selection::Sample => sample_action(&values, serving, rng),
                Selection::Greedy => greedy_action(&values, serving),
            };
            if policy.forced_stay {
                action.ho = false;
            }
            let lp = tape.scalar(log_prob(&tape, &policy, action)?);
            let value = tape.scalar(model.critic.forward(&tape, &model.store, z, g)?);
            if !lp.is_finite() || !value.is_finite() {
                return Err(AgentError::NonFinite(format!("policy output for ue {ue}")));
            }
            let record = DecisionRecord::new(observed.now_us, ue, &mask, &values, action);
            let zv = tape.value(z).into_data();
            env.apply(ue, action, &mask)?;
            out.push((
                Transition {
                    ue,
                    obs: obs.clone(),
                    g: g.clone(),
                    mask,
                    action,
                    log_prob: lp,
                    value,
                    reward: 0.0,
                    done: false,
                    advantage: 0.0,
                    ret: 0.0,
                },
                record,
                zv,
            ));
        }
        Ok(out)
    }

    /// Critic values of the current observations, used to bootstrap a
    /// truncated rollout.
    pub fn values(&self, model: &Model, observed: &Observed) -> Result<BTreeMap<usize, f64>> {
        let mut out = BTreeMap::new();
        for (&ue, (obs, g)) in &observed.obs {
            let tape = Tape::new();
            let z = model.observe(&tape, obs)?;
            out.insert(
                ue,
                tape.scalar(model.critic.forward(&tape, &model.store, z, g)?),
            );
        }
        Ok(out)
    }
}

pub fn greedy_action(values: &PolicyValues, serving: usize) -> HandoverAction {
    let valid = values.target.iter().any(|&p| p > 0.0);
    let target = if valid {
        argmax(&values.target)
    } else {
        serving
    };
    HandoverAction {
        ho: valid && values.p_ho > 0.5,
        target,
    }
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeConfig {
    pub steps: usize,
    pub selection: Selection,
    /// Seed of the per-agent sampling streams.
    pub agent_seed: u64,
    /// Keep transitions, link batches and bootstrap values.
    pub collect: bool,
    pub record_trace: bool,
    pub record_embeddings: bool,
}

/// One UE's transitions in time order plus the value after the last one.
#[derive(Clone, Debug, Default)]
pub struct AgentSequence {
    pub ue: usize,
    pub transitions: Vec<Transition>,
    pub bootstrap: f64,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub env: HoEnv,
    pub metrics: EnvMetrics,
    pub sequences: Vec<AgentSequence>,
    pub links: Vec<LinkBatch>,
    pub trace: Vec<DecisionRecord>,
    pub embeddings: Vec<EmbeddingRow>,
}

/// Runs `cfg.steps` decision periods. Rule-controlled UEs act inside the
/// environment; learned UEs need `model`.
pub fn run_episode(model: Option<&Model>, mut env: HoEnv, cfg: &EpisodeConfig) -> Result<Episode> {
    let learned = env.learned_ues();
    let mut runner = match (model, learned.is_empty()) {
        (_, true) => None,
        (Some(m), false) => Some((m, AgentRunner::new(m, &env, cfg.agent_seed)?)),
        (None, false) => {
            return Err(AgentError::config(
                "controllers",
                "learned controllers need a model",
            ))
        }
    };
    let mut sequences: BTreeMap<usize, AgentSequence> = learned
        .iter()
        .map(|&ue| {
            (
                ue,
                AgentSequence {
                    ue,
                    ..AgentSequence::default()
                },
            )
        })
        .collect();
    let mut links = Vec::new();
    let mut trace = Vec::new();
    let mut embeddings = Vec::new();
    for _ in 0..cfg.steps {
        let mut pending = Vec::new();
        if let Some((m, r)) = runner.as_mut() {
            let observed = r.observe(m, &mut env)?;
            for (t, rec, z) in r.act(m, &mut env, &observed, cfg.selection)? {
                if cfg.record_trace {
                    trace.push(rec);
                }
                if cfg.record_embeddings {
                    embeddings.push(EmbeddingRow {
                        ue_id: t.ue,
                        timestamp_ms: observed.now_us as f64 / 1000.0,
                        z,
                    });
                }
                pending.push(t);
            }
            if cfg.collect {
                links.push(observed.link);
            }
        } else {
            env.take_reports();
        }
        let rewards = env.step_decision()?;
        if cfg.collect {
            for mut t in pending {
                t.reward = rewards[t.ue].reward;
                sequences
                    .get_mut(&t.ue)
                    .expect("learned UE")
                    .transitions
                    .push(t);
            }
        }
    }
    if cfg.collect && cfg.steps > 0 {
        if let Some((m, r)) = runner.as_mut() {
            let observed = r.observe(m, &mut env)?;
            for (ue, v) in r.values(m, &observed)? {
                sequences.get_mut(&ue).expect("learned UE").bootstrap = v;
            }
        }
    }
    let sequences = if cfg.collect {
        sequences.into_values().collect()
    } else {
        Vec::new()
    };
    Ok(Episode {
        metrics: env.finish(),
        env,
        sequences,
        links,
        trace,
        embeddings,
    })
}
