use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tape_nn::layers::{Linear, Mlp};
use tape_nn::{Group, ParamStore, Tape, Tensor, Var};

use crate::error::{AgentError, Result};
use crate::mask::ActionMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            obs_dim: 32,
            hidden: vec![64, 64],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverAction {
    pub ho: bool,
    /// Recorded even when `ho` is false; only executed when it is true.
    pub target: usize,
}

/// Shared trunk with a two-way trigger head and a per-cell target head.
#[derive(Clone, Debug)]
pub struct Actor {
    trunk: Mlp,
    ho_head: Linear,
    target_head: Linear,
    n_cells: usize,
}

/// Distributions recorded on a tape for one observation.
#[derive(Clone, Copy, Debug)]
pub struct ActorOutput {
    /// `[1, 2]`: probabilities of stay / hand over.
    pub p_ho: Var,
    /// `[1, n_cells]` unmasked target distribution.
    pub target_raw: Var,
    /// Masked and renormalized target distribution; `None` when no target
    /// is valid.
    pub target: Option<Var>,
    /// Handing over is not permitted; `p_ho` is the constant `[1, 0]`.
    pub forced_stay: bool,
}

fn softmax_and_log(tape: &Tape, logits: Var) -> Result<(Var, Var)> {
    let n = tape.shape(logits)[1];
    let max = tape
        .value(logits)
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = tape.add_scalar(logits, -max);
    let lse = tape.ln(tape.sum(tape.exp(shifted)));
    let spread = tape.matmul(lse, tape.leaf(Tensor::filled(&[1, n], 1.0)))?;
    let log_p = tape.sub(shifted, spread)?;
    Ok((tape.exp(log_p), log_p))
}

impl Actor {
    pub fn new(
        store: &mut ParamStore,
        cfg: &PolicyConfig,
        n_cells: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut dims = vec![cfg.obs_dim];
        dims.extend(&cfg.hidden);
        let last = *dims.last().unwrap();
        Ok(Actor {
            trunk: Mlp::new(store, "actor.trunk", Group::Actor, &dims, false, true, rng)?,
            ho_head: Linear::new(store, "actor.ho", Group::Actor, last, 2, rng)?,
            target_head: Linear::new(store, "actor.target", Group::Actor, last, n_cells, rng)?,
            n_cells,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        obs: Var,
        mask: &ActionMask,
    ) -> Result<ActorOutput> {
        if mask.combined.len() != self.n_cells {
            return Err(AgentError::Contract(format!(
                "mask over {} cells, actor has {}",
                mask.combined.len(),
                self.n_cells
            )));
        }
        let h = self.trunk.forward(tape, store, obs)?;
        let (target_raw, _) = softmax_and_log(tape, self.target_head.forward(tape, store, h)?)?;
        let target = if mask.valid_count() > 0 {
            let m = Tensor::row(mask.as_f64());
            let kept = tape.mul_const(target_raw, &m)?;
            let total = tape.sum(kept);
            let spread = tape.matmul(total, tape.leaf(Tensor::filled(&[1, self.n_cells], 1.0)))?;
            Some(tape.div(kept, spread)?)
        } else {
            None
        };
        let forced_stay = !mask.ho_allowed || target.is_none();
        let p_ho = if forced_stay {
            tape.constant_row(vec![1.0, 0.0])
        } else {
            softmax_and_log(tape, self.ho_head.forward(tape, store, h)?)?.0
        };
        Ok(ActorOutput {
            p_ho,
            target_raw,
            target,
            forced_stay,
        })
    }
}

/// `log p(p_HO) + [p_HO = 1] log p~(target)`.
pub fn log_prob(tape: &Tape, out: &ActorOutput, action: HandoverAction) -> Result<Var> {
    if out.forced_stay {
        if action.ho {
            return Err(AgentError::Contract(
                "handover action under a forced-stay mask".into(),
            ));
        }
        return Ok(tape.leaf(Tensor::scalar(0.0)));
    }
    let lp_ho = tape.ln(tape.element(out.p_ho, 0, action.ho as usize)?);
    if !action.ho {
        return Ok(lp_ho);
    }
    let target = out.target.expect("not forced to stay");
    let p = tape.element(target, 0, action.target)?;
    if tape.scalar(p) <= 0.0 {
        return Err(AgentError::Contract(format!(
            "masked target {} in action",
            action.target
        )));
    }
    Ok(tape.add(lp_ho, tape.ln(p))?)
}

/// `log pi(a) - log sum_a' pi(a') M(a')`, the unrenormalized route to the
/// masked target log-probability.
pub fn masked_log_prob_via_normalizer(
    tape: &Tape,
    out: &ActorOutput,
    mask: &ActionMask,
    target: usize,
) -> Result<Var> {
    let lp = tape.ln(tape.element(out.target_raw, 0, target)?);
    let z = tape.sum(tape.mul_const(out.target_raw, &Tensor::row(mask.as_f64()))?);
    Ok(tape.sub(lp, tape.ln(z))?)
}

/// Entropy of the masked joint: `H(p_HO) + p(p_HO = 1) H(p~)`.
pub fn entropy(tape: &Tape, out: &ActorOutput) -> Result<Var> {
    if out.forced_stay {
        return Ok(tape.leaf(Tensor::scalar(0.0)));
    }
    let plogp = |p: Var, pad: Tensor| -> Result<Var> {
        // masked entries are 0; adding 1 there makes their term 0 ln 1
        let safe = tape.add(p, tape.leaf(pad))?;
        Ok(tape.neg(tape.sum(tape.mul(p, tape.ln(safe))?)))
    };
    let h_ho = plogp(out.p_ho, Tensor::zeros(&[1, 2]))?;
    let target = out.target.expect("not forced to stay");
    let pad: Vec<f64> = tape
        .value(target)
        .data()
        .iter()
        .map(|&p| if p == 0.0 { 1.0 } else { 0.0 })
        .collect();
    let h_t = plogp(target, Tensor::row(pad))?;
    let weighted = tape.mul(tape.element(out.p_ho, 0, 1)?, h_t)?;
    Ok(tape.add(h_ho, weighted)?)
}

/// Plain probabilities read off an [`ActorOutput`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyValues {
    pub p_ho: f64,
    pub target: Vec<f64>,
}

impl PolicyValues {
    pub fn read(tape: &Tape, out: &ActorOutput, n_cells: usize) -> Self {
        PolicyValues {
            p_ho: tape.value(out.p_ho).data()[1],
            target: out
                .target
                .map_or_else(|| vec![0.0; n_cells], |t| tape.value(t).into_data()),
        }
    }
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Draws the trigger and the target. Zero-probability targets are never
/// returned; with no valid target the serving cell is recorded.
pub fn sample_action(values: &PolicyValues, serving: usize, rng: &mut impl Rng) -> HandoverAction {
    let ho = rng.random::<f64>() < values.p_ho;
    let target = if values.target.iter().any(|&p| p > 0.0) {
        draw(&values.target, rng)
    } else {
        serving
    };
    HandoverAction { ho, target }
}

/// Value head over `[o || g]`.
#[derive(Clone, Debug)]
pub struct Critic {
    mlp: Mlp,
}

impl Critic {
    pub fn new(
        store: &mut ParamStore,
        cfg: &PolicyConfig,
        graph_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut dims = vec![cfg.obs_dim + graph_dim];
        dims.extend(&cfg.hidden);
        dims.push(1);
        Ok(Critic {
            mlp: Mlp::new(store, "critic", Group::Critic, &dims, false, false, rng)?,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// `g` enters as a constant: no gradient flows back into it.
    pub fn forward(&self, tape: &Tape, store: &ParamStore, obs: Var, g: &[f64]) -> Result<Var> {
        let x = tape.concat_cols(&[obs, tape.constant_row(g.to_vec())])?;
        Ok(self.mlp.forward(tape, store, x)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub timestamp_ms: f64,
    pub ue_id: usize,
    pub mask: String,
    pub p_ho: f64,
    pub target_probs: String,
    pub ho: bool,
    pub target: usize,
}

impl DecisionRecord {
    pub fn new(
        timestamp_us: u64,
        ue: usize,
        mask: &ActionMask,
        values: &PolicyValues,
        action: HandoverAction,
    ) -> Self {
        DecisionRecord {
            timestamp_ms: timestamp_us as f64 / 1000.0,
            ue_id: ue,
            mask: mask.bits(),
            p_ho: values.p_ho,
            target_probs: values
                .target
                .iter()
                .map(|p| format!("{p:.6}"))
                .collect::<Vec<_>>()
                .join(";"),
            ho: action.ho,
            target: action.target,
        }
    }
}

pub fn write_decision_trace<W: Write>(w: W, records: &[DecisionRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask(bits: &[bool], allowed: bool) -> ActionMask {
        ActionMask {
            reported: bits.to_vec(),
            signal: bits.to_vec(),
            load: bits.to_vec(),
            combined: bits.to_vec(),
            ho_allowed: allowed,
        }
    }

    fn actor() -> (ParamStore, Actor) {
        let mut store = ParamStore::default();
        let a = Actor::new(
            &mut store,
            &PolicyConfig::default(),
            3,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        (store, a)
    }

    #[test]
    fn all_zero_mask_forces_stay() {
        let (store, a) = actor();
        let t = Tape::new();
        let obs = t.constant_row(vec![0.3; 32]);
        let out = a
            .forward(&t, &store, obs, &mask(&[false; 3], false))
            .unwrap();
        assert!(out.forced_stay);
        let v = PolicyValues::read(&t, &out, 3);
        assert_eq!(v.p_ho, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let act = sample_action(&v, 1, &mut rng);
            assert!(!act.ho);
            assert_eq!(act.target, 1);
        }
        assert_eq!(t.scalar(entropy(&t, &out).unwrap()), 0.0);
        assert!(log_prob(
            &t,
            &out,
            HandoverAction {
                ho: true,
                target: 0
            }
        )
        .is_err());
    }

    #[test]
    fn masked_target_head_sums_to_one() {
        let (store, a) = actor();
        let t = Tape::new();
        let obs = t.constant_row((0..32).map(|i| (i as f64 * 0.37).sin()).collect());
        let out = a
            .forward(&t, &store, obs, &mask(&[true, false, true], true))
            .unwrap();
        let v = PolicyValues::read(&t, &out, 3);
        assert_eq!(v.target[1], 0.0);
        assert!((v.target.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_critic_is_zero() {
        let mut store = ParamStore::default();
        let c = Critic::new(
            &mut store,
            &PolicyConfig::default(),
            32,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store
                .value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let t = Tape::new();
        let v = c
            .forward(&t, &store, t.constant_row(vec![1.0; 32]), &[2.0; 32])
            .unwrap();
        assert_eq!(t.scalar(v), 0.0);
    }

    #[test]
    fn draw_skips_zero_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let i = draw(&[0.0, 0.4, 0.0, 0.6], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }
}
