use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use tape_nn::{Tape, Tensor, Var};

use crate::error::{Result, TgnError};

/// One uniformly drawn non-interacting cell per positive `(ue, cell)` pair.
/// A UE that touched every cell in the batch contributes no negatives.
pub fn sample_negatives(
    positives: &[(usize, usize)],
    n_cells: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    let mut touched: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(ue, cell) in positives {
        touched.entry(ue).or_default().insert(cell);
    }
    let mut out = Vec::with_capacity(positives.len());
    for &(ue, _) in positives {
        let seen = &touched[&ue];
        let free: Vec<usize> = (0..n_cells).filter(|c| !seen.contains(c)).collect();
        if !free.is_empty() {
            out.push((ue, free[rng.random_range(0..free.len())]));
        }
    }
    out
}

/// Mean binary cross-entropy of `sigmoid(z_a . z_b)` over labelled pairs,
/// `pairs` holding `(a, b, label)` as indices into `z`. Returns `None` for an
/// empty pair set (zero loss, nothing to differentiate).
pub fn link_prediction_loss(
    tape: &Tape,
    z: &[Var],
    pairs: &[(usize, usize, bool)],
) -> Result<Option<Var>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let pick = |k: usize| {
        z.get(k)
            .copied()
            .ok_or_else(|| TgnError::UnknownNode(format!("embedding {k}")))
    };
    let a = pairs
        .iter()
        .map(|p| pick(p.0))
        .collect::<Result<Vec<_>>>()?;
    let b = pairs
        .iter()
        .map(|p| pick(p.1))
        .collect::<Result<Vec<_>>>()?;
    let prod = tape.mul(tape.concat_rows(&a)?, tape.concat_rows(&b)?)?;
    let dim = tape.shape(prod)[1];
    let scores = tape.matmul(prod, tape.leaf(Tensor::filled(&[dim, 1], 1.0)))?;
    // -ln sigmoid(s) = softplus(-s) for positives, softplus(s) for negatives
    let signs = Tensor::matrix(
        pairs.len(),
        1,
        pairs.iter().map(|p| if p.2 { -1.0 } else { 1.0 }).collect(),
    )?;
    Ok(Some(
        tape.mean(tape.softplus(tape.mul_const(scores, &signs)?)),
    ))
}
