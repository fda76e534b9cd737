//! PCA by power iteration and cosine-similarity matrices over embedding
//! traces.

use std::collections::BTreeMap;

use ho_agent::rollout::EmbeddingRow;
use serde::Serialize;

use crate::error::{LabError, Result};

pub const POWER_TOL: f64 = 1e-9;
pub const POWER_MAX_ITER: usize = 10_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

pub fn cosine_matrix(zs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    zs.iter()
        .map(|a| zs.iter().map(|b| cosine_similarity(a, b)).collect())
        .collect()
}

/// Mean of the entries `m[i][j]`, `i < j`, whose lag `j - i` satisfies `keep`.
pub fn mean_at_lag(m: &[Vec<f64>], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            if keep(j - i) {
                sum += m[i][j];
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Column means and the sample covariance of the rows.
pub fn covariance(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = rows.len();
    if n < 2 {
        return Err(LabError::Analysis(format!(
            "covariance needs 2 rows, got {n}"
        )));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(LabError::Analysis("rows of different lengths".into()));
    }
    let mean: Vec<f64> = (0..d)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[a][b] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a][b] /= (n - 1) as f64;
            cov[b][a] = cov[a][b];
        }
    }
    Ok((mean, cov))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Leading `k` eigenpairs of a symmetric positive semi-definite matrix by
/// power iteration with Hotelling deflation. Iteration stops once the unit
/// iterate moves less than `tol`; sign is fixed so the largest-magnitude
/// entry is positive.
pub fn power_iteration(matrix: &[Vec<f64>], k: usize, tol: f64, max_iter: usize) -> Vec<Eigenpair> {
    let d = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(d) {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
        let n0 = norm(&v);
        v.iter_mut().for_each(|x| *x /= n0);
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let mut w = mat_vec(&a, &v);
            let nw = norm(&w);
            if nw == 0.0 {
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let delta = w
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            v = w;
            if delta < tol {
                break;
            }
        }
        let lead = v
            .iter()
            .copied()
            .fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let value = dot(&v, &mat_vec(&a, &v));
        for i in 0..d {
            for j in 0..d {
                a[i][j] -= value * v[i] * v[j];
            }
        }
        out.push(Eigenpair {
            value,
            vector: v,
            iterations,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub components: Vec<Eigenpair>,
}

impl Pca {
    pub fn fit(rows: &[Vec<f64>], k: usize) -> Result<Pca> {
        let (mean, cov) = covariance(rows)?;
        Ok(Pca {
            mean,
            components: power_iteration(&cov, k, POWER_TOL, POWER_MAX_ITER),
        })
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components
            .iter()
            .map(|c| dot(&c.vector, &centered))
            .collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, &w) in self.components.iter().zip(coords) {
            for (xi, vi) in x.iter_mut().zip(&c.vector) {
                *xi += w * vi;
            }
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub ue_id: usize,
    pub timestamp_ms: f64,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingAnalysis {
    pub pca: Pca,
    /// Per UE, time-ordered 2D projections.
    pub trajectories: BTreeMap<usize, Vec<TrajectoryPoint>>,
    /// Per UE, cosine similarity of its time-ordered embeddings.
    pub cosine: BTreeMap<usize, Vec<Vec<f64>>>,
}

/// Fits two principal components on all rows, then projects and compares
/// each UE's embeddings in time order.
pub fn analyze_embeddings(trace: &[EmbeddingRow]) -> Result<EmbeddingAnalysis> {
    if trace.len() < 3 {
        return Err(LabError::Analysis(format!(
            "embedding analysis needs at least 3 samples, got {}",
            trace.len()
        )));
    }
    let rows: Vec<Vec<f64>> = trace.iter().map(|r| r.z.clone()).collect();
    let pca = Pca::fit(&rows, 2)?;
    let mut by_ue: BTreeMap<usize, Vec<&EmbeddingRow>> = BTreeMap::new();
    for r in trace {
        by_ue.entry(r.ue_id).or_default().push(r);
    }
    let mut trajectories = BTreeMap::new();
    let mut cosine = BTreeMap::new();
    for (ue, mut rs) in by_ue {
        rs.sort_by(|a, b| a.timestamp_ms.total_cmp(&b.timestamp_ms));
        let points = rs
            .iter()
            .map(|r| {
                let p = pca.project(&r.z);
                TrajectoryPoint {
                    ue_id: ue,
                    timestamp_ms: r.timestamp_ms,
                    pc1: p[0],
                    pc2: p.get(1).copied().unwrap_or(0.0),
                }
            })
            .collect();
        trajectories.insert(ue, points);
        let zs: Vec<Vec<f64>> = rs.iter().map(|r| r.z.clone()).collect();
        cosine.insert(ue, cosine_matrix(&zs));
    }
    Ok(EmbeddingAnalysis {
        pca,
        trajectories,
        cosine,
    })
}
