//! Central finite-difference checks against tape gradients.

use crate::{ParamId, ParamStore, Result, Tape, Tensor, Var};

/// Denominator floor for the per-entry relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.max_abs_error = self.max_abs_error.max(abs);
        self.max_rel_error = self.max_rel_error.max(rel);
        self.checked += 1;
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            checked: self.checked + other.checked,
        }
    }
}

/// Checks `d f / d inputs` where `f` records a scalar on a fresh tape.
pub fn check_inputs<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheck>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone())).collect();
        let o = f(&t, &vs)?;
        Ok(t.scalar(o))
    };

    let mut report = GradCheck::default();
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            report.record(analytic.data()[i], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Checks `d f / d params` for the listed parameters; `f` must read them
/// through `tape.param`.
pub fn check_params<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    f: F,
    step: f64,
) -> Result<GradCheck>
where
    F: Fn(&Tape, &ParamStore) -> Result<Var>,
{
    let tape = Tape::new();
    let out = f(&tape, store)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = ids
        .iter()
        .map(|&id| {
            let v = tape.param(store, id);
            grads
                .wrt(v)
                .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()))
        })
        .collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let t = Tape::new();
        let o = f(&t, store)?;
        Ok(t.scalar(o))
    };

    let mut report = GradCheck::default();
    for (k, &id) in ids.iter().enumerate() {
        for i in 0..store.value(id).len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + step;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig - step;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            report.record(analytic[k].data()[i], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}
