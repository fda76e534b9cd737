use serde::{Deserialize, Serialize};
use tape_nn::{Group, NnError, Tape, Var};
use tgn::LinkBatch;

use crate::error::{AgentError, Result};
use crate::model::Model;
use crate::policy::{entropy, log_prob};
use crate::rollout::{AgentSequence, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Decision steps per environment per iteration.
    pub horizon: usize,
    pub max_grad_norm: Option<f64>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_encoder: f64,
    /// Ablation switches for the actor and critic gradients into the encoder.
    pub actor_into_encoder: bool,
    pub critic_into_encoder: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            entropy_coef: 0.01,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 4,
            minibatch: 64,
            horizon: 50,
            max_grad_norm: Some(0.5),
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            lr_encoder: 3e-4,
            actor_into_encoder: true,
            critic_into_encoder: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(AgentError::config(
                    field,
                    format!("must lie in (0, 1), got {v}"),
                ))
            }
        };
        open("ppo.clip", self.clip)?;
        open("ppo.gamma", self.gamma)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(AgentError::config(
                "ppo.lambda",
                format!("must lie in [0, 1], got {}", self.lambda),
            ));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(AgentError::config("ppo.entropy_coef", "must be >= 0"));
        }
        if self.minibatch == 0 {
            return Err(AgentError::config("ppo.minibatch", "must be > 0"));
        }
        for (f, v) in [
            ("ppo.lr_actor", self.lr_actor),
            ("ppo.lr_critic", self.lr_critic),
            ("ppo.lr_encoder", self.lr_encoder),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(AgentError::config(
                    f,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return Err(AgentError::config("ppo.max_grad_norm", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Encoder, actor, critic.
    pub fn rates(&self) -> [f64; 3] {
        [self.lr_encoder, self.lr_actor, self.lr_critic]
    }
}

/// Transitions of one collection phase, grouped into per-agent sequences.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Index ranges into `transitions` with their bootstrap values.
    pub sequences: Vec<(std::ops::Range<usize>, f64)>,
    pub links: Vec<LinkBatch>,
}

impl RolloutBuffer {
    pub fn push_sequence(&mut self, seq: AgentSequence) {
        let start = self.transitions.len();
        self.transitions.extend(seq.transitions);
        self.sequences
            .push((start..self.transitions.len(), seq.bootstrap));
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// GAE over one sequence. Returns `(advantages, returns)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Fills advantages and returns, then standardizes advantages over the
/// whole buffer.
pub fn compute_gae(buffer: &mut RolloutBuffer, cfg: &PpoConfig) {
    for (range, bootstrap) in buffer.sequences.clone() {
        let seq = &mut buffer.transitions[range];
        let rewards: Vec<f64> = seq.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = seq.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = seq.iter().map(|t| t.done).collect();
        let (adv, ret) = gae(&rewards, &values, &dones, bootstrap, cfg.gamma, cfg.lambda);
        for (t, (a, r)) in seq.iter_mut().zip(adv.into_iter().zip(ret)) {
            t.advantage = a;
            t.ret = r;
        }
    }
    let n = buffer.transitions.len();
    if n == 0 {
        return;
    }
    let mean = buffer.transitions.iter().map(|t| t.advantage).sum::<f64>() / n as f64;
    let var = buffer
        .transitions
        .iter()
        .map(|t| (t.advantage - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt() + 1e-8;
    for t in &mut buffer.transitions {
        t.advantage = (t.advantage - mean) / std;
    }
}

/// `-min(r A, clip(r, 1 - eps, 1 + eps) A)` with `r = exp(new - old)`.
pub fn clipped_surrogate(
    tape: &Tape,
    log_prob_new: Var,
    log_prob_old: f64,
    advantage: f64,
    clip: f64,
) -> Result<Var> {
    let ratio = tape.exp(tape.add_scalar(log_prob_new, -log_prob_old));
    let unclipped = tape.scale(ratio, advantage);
    let clipped = tape.scale(tape.clamp(ratio, 1.0 - clip, 1.0 + clip), advantage);
    Ok(tape.neg(tape.minimum(unclipped, clipped)?))
}

/// `max((V - R)^2, (V_old + clip(V - V_old, -eps, eps) - R)^2)`.
pub fn clipped_value_loss(
    tape: &Tape,
    value: Var,
    value_old: f64,
    ret: f64,
    clip: f64,
) -> Result<Var> {
    let err = tape.add_scalar(value, -ret);
    let plain = tape.mul(err, err)?;
    let delta = tape.clamp(tape.add_scalar(value, -value_old), -clip, clip);
    let cerr = tape.add_scalar(delta, value_old - ret);
    let clipped = tape.mul(cerr, cerr)?;
    Ok(tape.maximum(plain, clipped)?)
}

fn mean_of(tape: &Tape, parts: &[Var]) -> Result<Var> {
    Ok(tape.mean(tape.concat_cols(parts)?))
}

/// Actor loss and the mean entropy over `batch`, with `z` the observation
/// of each transition on `tape`. Masks come from the transitions.
pub fn ppo_actor_loss(
    tape: &Tape,
    model: &Model,
    batch: &[&Transition],
    z: &[Var],
    cfg: &PpoConfig,
) -> Result<(Var, Var)> {
    let mut surr = Vec::with_capacity(batch.len());
    let mut ent = Vec::with_capacity(batch.len());
    for (t, &zi) in batch.iter().zip(z) {
        let out = model.actor.forward(tape, &model.store, zi, &t.mask)?;
        let lp = log_prob(tape, &out, t.action)?;
        surr.push(clipped_surrogate(
            tape,
            lp,
            t.log_prob,
            t.advantage,
            cfg.clip,
        )?);
        ent.push(entropy(tape, &out)?);
    }
    let h = mean_of(tape, &ent)?;
    let loss = tape.sub(mean_of(tape, &surr)?, tape.scale(h, cfg.entropy_coef))?;
    Ok((loss, h))
}

pub fn ppo_critic_loss(
    tape: &Tape,
    model: &Model,
    batch: &[&Transition],
    z: &[Var],
    cfg: &PpoConfig,
) -> Result<Var> {
    let mut parts = Vec::with_capacity(batch.len());
    for (t, &zi) in batch.iter().zip(z) {
        let v = model.critic.forward(tape, &model.store, zi, &t.g)?;
        parts.push(clipped_value_loss(tape, v, t.value, t.ret, cfg.clip)?);
    }
    mean_of(tape, &parts)
}

/// Mean link-prediction loss over the non-empty batches.
pub fn link_loss(tape: &Tape, model: &Model, links: &[&LinkBatch]) -> Result<Option<Var>> {
    let mut parts = Vec::new();
    for b in links {
        if let Some(l) = model.encoder.link_loss(tape, &model.store, b)? {
            parts.push(l);
        }
    }
    if parts.is_empty() {
        return Ok(None);
    }
    Ok(Some(mean_of(tape, &parts)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossStats {
    pub actor: f64,
    pub critic: f64,
    pub link: f64,
    pub entropy: f64,
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AgentError::NonFinite(format!("{name} loss")))
    }
}

fn non_finite(e: NnError) -> AgentError {
    match e {
        NnError::NonFinite(m) => AgentError::NonFinite(m),
        other => AgentError::Nn(other),
    }
}

/// One optimizer step on all three groups. The actor loss moves theta, the
/// critic loss moves phi, and the encoder takes a single step on the sum of
/// the actor, critic and link gradients, each weighted by its own rate.
pub fn update_step(
    model: &mut Model,
    batch: &[&Transition],
    links: &[&LinkBatch],
    cfg: &PpoConfig,
) -> Result<LossStats> {
    let tape = Tape::new();
    let z = batch
        .iter()
        .map(|t| model.observe(&tape, &t.obs))
        .collect::<Result<Vec<_>>>()?;
    let mut stats = LossStats::default();
    let rate_pi = model.store.rate(Group::Actor);
    let rate_v = model.store.rate(Group::Critic);
    let rate_t = model.store.rate(Group::Encoder);
    let w_pi = if cfg.actor_into_encoder { rate_pi } else { 0.0 };
    let w_v = if cfg.critic_into_encoder { rate_v } else { 0.0 };
    let total = w_pi + w_v + rate_t;
    let share = |w: f64| if total > 0.0 { Some(w / total) } else { None };
    model.store.zero_all_grads();

    if !batch.is_empty() {
        let (la, h) = ppo_actor_loss(&tape, model, batch, &z, cfg)?;
        let lc = ppo_critic_loss(&tape, model, batch, &z, cfg)?;
        stats.actor = finite("actor", tape.scalar(la))?;
        stats.critic = finite("critic", tape.scalar(lc))?;
        stats.entropy = tape.scalar(h);
        let ga = tape.backward(la)?;
        ga.accumulate_scaled(&mut model.store, |g| match g {
            Group::Actor => Some(1.0),
            Group::Encoder if cfg.actor_into_encoder => share(w_pi),
            _ => None,
        })?;
        let gc = tape.backward(lc)?;
        gc.accumulate_scaled(&mut model.store, |g| match g {
            Group::Critic => Some(1.0),
            Group::Encoder if cfg.critic_into_encoder => share(w_v),
            _ => None,
        })?;
    }
    if let Some(lt) = link_loss(&tape, model, links)? {
        stats.link = finite("link", tape.scalar(lt))?;
        let gt = tape.backward(lt)?;
        gt.accumulate_scaled(&mut model.store, |g| match g {
            Group::Encoder => share(rate_t),
            _ => None,
        })?;
    }
    drop(tape);
    if let Some(g) = Group::ALL
        .into_iter()
        .find(|&g| !model.store.grad_norm(g).is_finite())
    {
        model.store.zero_all_grads();
        return Err(AgentError::NonFinite(format!("{g:?} gradient")));
    }
    model.store.step(Group::Actor).map_err(non_finite)?;
    model.store.step(Group::Critic).map_err(non_finite)?;
    model
        .store
        .step_with_rate(Group::Encoder, total)
        .map_err(non_finite)?;
    Ok(stats)
}
