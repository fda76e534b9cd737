use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tape_nn::AdamConfig;

use crate::baselines::ControllerKind;
use crate::env::{EnvMetrics, HoEnv, Scenario};
use crate::error::{AgentError, Result};
use crate::model::{Model, ModelConfig};
use crate::ppo::{compute_gae, update_step, LossStats, PpoConfig, RolloutBuffer};
use crate::rollout::{run_episode, EpisodeConfig, Selection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Parallel simulator instances per iteration, each with a fresh seed.
    pub envs_per_iteration: usize,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub model: ModelConfig,
    /// Checkpoint every this many iterations; 0 keeps only the initial and
    /// final ones.
    pub checkpoint_every: usize,
    pub controller: ControllerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20,
            envs_per_iteration: 4,
            seed: 0,
            ppo: PpoConfig::default(),
            model: ModelConfig::default(),
            checkpoint_every: 0,
            controller: ControllerKind::learned(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.model.validate()?;
        if self.envs_per_iteration == 0 {
            return Err(AgentError::config("envs_per_iteration", "must be > 0"));
        }
        if !self.controller.is_learned() {
            return Err(AgentError::config(
                "controller",
                "training needs a learned controller kind",
            ));
        }
        Ok(())
    }

    /// Agent transitions collected over the whole run.
    pub fn agent_steps(&self, n_ues: usize) -> usize {
        self.iterations * self.envs_per_iteration * self.ppo.horizon * n_ues
    }
}

/// SplitMix64 of `(seed, a, b)`; decorrelates per-iteration seeds.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub agent_steps: usize,
    pub mean_reward: f64,
    pub regret_rate: f64,
    pub p95_delay_ms: f64,
    pub loss_rate: f64,
    pub handovers: u64,
    pub mask_vetoes: u64,
    pub mask_violations: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub link_loss: f64,
    pub entropy: f64,
    pub skipped_epochs: usize,
}

/// Nearest-rank percentile of unsorted samples; `None` when empty.
pub fn nearest_rank(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Runs `envs` episodes in parallel against a frozen model and merges them
/// in environment order.
pub fn collect_rollout(
    model: &Model,
    scenario: &Scenario,
    controller: &ControllerKind,
    seeds: &[(u64, u64)],
    horizon: usize,
) -> Result<(RolloutBuffer, EnvMetrics)> {
    let results: Vec<Result<_>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&(sim_seed, agent_seed)| {
                s.spawn(move || {
                    let env = HoEnv::uniform(&scenario.with_seed(sim_seed), controller.clone())?;
                    let cfg = EpisodeConfig {
                        steps: horizon,
                        agent_seed,
                        collect: true,
                        selection: Selection::Sample,
                        ..Default::default()
                    };
                    run_episode(Some(model), env, &cfg)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rollout thread panicked"))
            .collect()
    });
    let mut buffer = RolloutBuffer::default();
    let mut metrics = EnvMetrics::default();
    for r in results {
        let ep = r?;
        for seq in ep.sequences {
            buffer.push_sequence(seq);
        }
        buffer.links.extend(ep.links);
        metrics.merge(&ep.metrics);
    }
    Ok((buffer, metrics))
}

/// PPO epochs over one buffer. An epoch hitting a non-finite value is
/// abandoned with a warning.
pub fn optimize(
    model: &mut Model,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<(LossStats, usize)> {
    let n = buffer.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = LossStats::default();
    let mut count = 0usize;
    let mut skipped = 0;
    if n == 0 {
        return Ok((sum, 0));
    }
    let batches = n.div_ceil(cfg.minibatch);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.minibatch).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| &buffer.transitions[i]).collect();
            let links: Vec<_> = buffer.links.iter().skip(b).step_by(batches).collect();
            match update_step(model, &batch, &links, cfg) {
                Ok(s) => {
                    sum.actor += s.actor;
                    sum.critic += s.critic;
                    sum.link += s.link;
                    sum.entropy += s.entropy;
                    count += 1;
                }
                Err(AgentError::NonFinite(what)) => {
                    log::warn!("epoch {epoch} minibatch {b}: non-finite {what}; epoch skipped");
                    skipped += 1;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    if count > 0 {
        let c = count as f64;
        sum = LossStats {
            actor: sum.actor / c,
            critic: sum.critic / c,
            link: sum.link / c,
            entropy: sum.entropy / c,
        };
    }
    Ok((sum, skipped))
}

pub struct TrainOutcome {
    pub model: Model,
    pub logs: Vec<IterationLog>,
}

pub fn write_logs<W: Write>(w: W, logs: &[IterationLog]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for l in logs {
        out.serialize(l)?;
    }
    out.flush()?;
    Ok(())
}

/// Alternates parallel collection and PPO updates. With `out`, writes
/// `train_metrics.csv` and checkpoints under `out/checkpoints`.
pub fn train(scenario: &Scenario, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    scenario.validate()?;
    let adam = AdamConfig {
        max_grad_norm: cfg.ppo.max_grad_norm,
        ..AdamConfig::default()
    };
    let mut model = Model::with_optimizer(
        &cfg.model,
        scenario.n_ues(),
        scenario.n_cells(),
        cfg.ppo.rates(),
        adam,
    )?;
    if let Some(path) = cfg.controller.checkpoint() {
        model.load_into(path)?;
        for (g, r) in tape_nn::Group::ALL.into_iter().zip(cfg.ppo.rates()) {
            model.store.set_rate(g, r);
        }
    }
    let ckpt = |model: &Model, it: usize| -> Result<()> {
        if let Some(dir) = out {
            model.save(&dir.join("checkpoints").join(format!("iter_{it:04}")))?;
        }
        Ok(())
    };
    ckpt(&model, 0)?;
    let mut logs = Vec::with_capacity(cfg.iterations);
    let mut steps = 0;
    for it in 1..=cfg.iterations {
        let seeds: Vec<(u64, u64)> = (0..cfg.envs_per_iteration as u64)
            .map(|k| {
                (
                    derive_seed(cfg.seed, it as u64, 2 * k),
                    derive_seed(cfg.seed, it as u64, 2 * k + 1),
                )
            })
            .collect();
        let (mut buffer, metrics) =
            collect_rollout(&model, scenario, &cfg.controller, &seeds, cfg.ppo.horizon)?;
        steps += buffer.len();
        compute_gae(&mut buffer, &cfg.ppo);
        let (loss, skipped) = optimize(
            &mut model,
            &buffer,
            &cfg.ppo,
            derive_seed(cfg.seed, it as u64, u64::MAX),
        )?;
        let log = IterationLog {
            iteration: it,
            agent_steps: steps,
            mean_reward: if metrics.reward_steps > 0 {
                metrics.reward_sum / metrics.reward_steps as f64
            } else {
                0.0
            },
            regret_rate: if metrics.reward_steps > 0 {
                metrics.regret_steps as f64 / metrics.reward_steps as f64
            } else {
                0.0
            },
            p95_delay_ms: nearest_rank(&metrics.delays_ms, 95.0).unwrap_or(0.0),
            loss_rate: metrics.loss_rate(),
            handovers: metrics.handovers,
            mask_vetoes: metrics.mask_vetoes,
            mask_violations: metrics.mask_violations,
            actor_loss: loss.actor,
            critic_loss: loss.critic,
            link_loss: loss.link,
            entropy: loss.entropy,
            skipped_epochs: skipped,
        };
        log::info!(
            "iter {it}: reward {:.4} p95 {:.1} ms handovers {} violations {}",
            log.mean_reward,
            log.p95_delay_ms,
            log.handovers,
            log.mask_violations
        );
        logs.push(log);
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.iterations {
            ckpt(&model, it)?;
        }
    }
    if cfg.iterations > 0 {
        ckpt(&model, cfg.iterations)?;
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_logs(fs::File::create(dir.join("train_metrics.csv"))?, &logs)?;
    }
    Ok(TrainOutcome { model, logs })
}
