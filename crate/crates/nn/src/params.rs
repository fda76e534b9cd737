use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{NnError, Result, Tensor};

/// The three independently optimized parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Graph encoder (ψ).
    Encoder,
    /// Policy network (θ).
    Actor,
    /// Value network (φ).
    Critic,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Encoder, Group::Actor, Group::Critic];

    fn index(self) -> usize {
        match self {
            Group::Encoder => 0,
            Group::Actor => 1,
            Group::Critic => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Per-group L2 clip applied to the accumulated gradient before the
    /// moment update. `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }
}

#[derive(Clone, Debug)]
struct Param {
    name: String,
    group: Group,
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named parameters partitioned into encoder/actor/critic groups, each with
/// its own learning rate and Adam state.
#[derive(Clone, Debug)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
    rates: [f64; 3],
    steps: [u64; 3],
    adam: AdamConfig,
    version: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new([1e-3; 3], AdamConfig::default())
    }
}

impl ParamStore {
    /// `rates` are indexed encoder, actor, critic.
    pub fn new(rates: [f64; 3], adam: AdamConfig) -> Self {
        Self {
            params: Vec::new(),
            by_name: BTreeMap::new(),
            rates,
            steps: [0; 3],
            adam,
            version: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NnError::DuplicateName(name));
        }
        let n = value.len();
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            group,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        Ok(ParamId(id))
    }

    /// Glorot-uniform `[fan_in, fan_out]` weight.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        group: Group,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        self.add(name, group, Tensor::raw(vec![fan_in, fan_out], data))
    }

    pub fn add_zeros(
        &mut self,
        name: impl Into<String>,
        group: Group,
        shape: &[usize],
    ) -> Result<ParamId> {
        self.add(name, group, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn group(&self, id: ParamId) -> Group {
        self.params[id.0].group
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    /// Direct mutable access; bumps the version so open tapes become stale.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        self.version += 1;
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn rate(&self, group: Group) -> f64 {
        self.rates[group.index()]
    }

    pub fn set_rate(&mut self, group: Group, rate: f64) {
        self.rates[group.index()] = rate;
    }

    pub fn adam(&self) -> &AdamConfig {
        &self.adam
    }

    pub fn num_values(&self, group: Group) -> usize {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.len())
            .sum()
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &[f64], scale: f64) {
        let g = &mut self.params[id.0].grad;
        for (acc, v) in g.iter_mut().zip(grad) {
            *acc += scale * v;
        }
    }

    pub fn zero_grad(&mut self, group: Group) {
        for p in self.params.iter_mut().filter(|p| p.group == group) {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn zero_all_grads(&mut self) {
        for g in Group::ALL {
            self.zero_grad(g);
        }
    }

    pub fn grad_norm(&self, group: Group) -> f64 {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// One Adam step on `group` using its accumulated gradient, then zeroes
    /// that group's gradient. Non-finite gradients abort without touching
    /// any value.
    pub fn step(&mut self, group: Group) -> Result<()> {
        self.step_with_rate(group, self.rates[group.index()])
    }

    pub fn step_with_rate(&mut self, group: Group, rate: f64) -> Result<()> {
        if let Some(p) = self
            .params
            .iter()
            .find(|p| p.group == group && p.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(NnError::NonFinite(format!("gradient of {}", p.name)));
        }
        let scale = match self.adam.max_grad_norm {
            Some(max) => {
                let norm = self.grad_norm(group);
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let gi = group.index();
        self.steps[gi] += 1;
        let t = self.steps[gi] as i32;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.adam;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for p in self.params.iter_mut().filter(|p| p.group == group) {
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let g = p.grad[i] * scale;
                p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g;
                p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g * g;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                values[i] -= rate * m_hat / (v_hat.sqrt() + eps);
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.version += 1;
        Ok(())
    }

    /// Writes `params.bin` (little-endian f64, concatenated) and
    /// `manifest.json` (name, group, shape, byte offset) into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blob = Vec::new();
        let mut entries = Vec::with_capacity(self.params.len());
        for p in &self.params {
            entries.push(ManifestEntry {
                name: p.name.clone(),
                group: p.group,
                shape: p.value.shape().to_vec(),
                offset: blob.len() as u64,
            });
            for v in p.value.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: "f64-le".to_string(),
            rates: self.rates,
            tensors: entries,
        };
        fs::File::create(dir.join("params.bin"))?.write_all(&blob)?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// Loads values by name into an already-built store. Every stored tensor
    /// must exist here with the same group and shape.
    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<()> {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut blob = Vec::new();
        fs::File::open(dir.join("params.bin"))?.read_to_end(&mut blob)?;
        for e in &manifest.tensors {
            let idx = *self
                .by_name
                .get(&e.name)
                .ok_or_else(|| NnError::UnknownParam(e.name.clone()))?;
            let p = &self.params[idx];
            if p.group != e.group || p.value.shape() != e.shape.as_slice() {
                return Err(NnError::ShapeMismatch {
                    op: "load_checkpoint",
                    left: p.value.shape().to_vec(),
                    right: e.shape.clone(),
                });
            }
            let n = p.value.len();
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > blob.len() {
                return Err(NnError::Invalid(format!(
                    "{} runs past end of params.bin",
                    e.name
                )));
            }
            let data: Vec<f64> = blob[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            self.params[idx].value = Tensor::new(e.shape.clone(), data)?;
        }
        self.rates = manifest.rates;
        self.version += 1;
        Ok(())
    }

    /// Flat copy of every value, in registration order.
    pub fn snapshot(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn group_snapshot(&self, group: Group) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    rates: [f64; 3],
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    group: Group,
    shape: Vec<usize>,
    offset: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::default();
        s.add_zeros("w", Group::Actor, &[1, 2]).unwrap();
        assert!(matches!(
            s.add_zeros("w", Group::Critic, &[1, 2]),
            Err(NnError::DuplicateName(_))
        ));
    }

    #[test]
    fn nan_gradient_aborts_without_change() {
        let mut s = ParamStore::default();
        let id = s
            .add("w", Group::Actor, Tensor::row(vec![1.0, 2.0]))
            .unwrap();
        s.accumulate(id, &[f64::NAN, 0.0], 1.0);
        assert!(matches!(s.step(Group::Actor), Err(NnError::NonFinite(_))));
        assert_eq!(s.value(id).data(), &[1.0, 2.0]);
    }

    #[test]
    fn grad_clip_limits_norm() {
        let mut s = ParamStore::new(
            [0.1; 3],
            AdamConfig {
                max_grad_norm: Some(1.0),
                ..AdamConfig::default()
            },
        );
        let id = s
            .add("w", Group::Encoder, Tensor::row(vec![0.0, 0.0]))
            .unwrap();
        s.accumulate(id, &[30.0, 40.0], 1.0);
        assert!((s.grad_norm(Group::Encoder) - 50.0).abs() < 1e-12);
        s.step(Group::Encoder).unwrap();
        // Adam's first step is rate * sign(g) regardless of the clip scale.
        let v = s.value(id).data();
        assert!((v[0] + 0.1).abs() < 1e-6 && (v[1] + 0.1).abs() < 1e-6);
        assert_eq!(s.grad(id), &[0.0, 0.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::default();
        s.add_glorot("enc.w", Group::Encoder, 3, 4, &mut rng)
            .unwrap();
        s.add_glorot("act.w", Group::Actor, 4, 2, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save_checkpoint(dir.path()).unwrap();

        let mut t = ParamStore::default();
        t.add_zeros("enc.w", Group::Encoder, &[3, 4]).unwrap();
        t.add_zeros("act.w", Group::Actor, &[4, 2]).unwrap();
        t.load_checkpoint(dir.path()).unwrap();
        assert_eq!(s.snapshot(), t.snapshot());

        let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("\"offset\": 96"));

        let mut wrong = ParamStore::default();
        wrong.add_zeros("enc.w", Group::Encoder, &[4, 3]).unwrap();
        wrong.add_zeros("act.w", Group::Actor, &[4, 2]).unwrap();
        assert!(wrong.load_checkpoint(dir.path()).is_err());
    }
}
