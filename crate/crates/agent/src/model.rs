use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tape_nn::{AdamConfig, ParamStore, Tape, Var};
use tgn::{EmbedInput, TgnConfig, TgnEncoder, TgnParams};

use crate::error::{AgentError, Result};
use crate::policy::{Actor, Critic, PolicyConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub tgn: TgnConfig,
    pub policy: PolicyConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            tgn: TgnConfig::default(),
            policy: PolicyConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.tgn.validate()?;
        if self.policy.obs_dim != self.tgn.embedding_dim {
            return Err(AgentError::config(
                "policy.obs_dim",
                format!(
                    "must equal tgn.embedding_dim ({}), got {}",
                    self.tgn.embedding_dim, self.policy.obs_dim
                ),
            ));
        }
        if self.policy.hidden.is_empty() || self.policy.hidden.contains(&0) {
            return Err(AgentError::config(
                "policy.hidden",
                "needs at least one non-zero layer",
            ));
        }
        Ok(())
    }
}

/// What an agent observes at a decision: the encoder inputs of its UE node,
/// or the instantaneous KPM vector for the snapshot ablation.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    Graph(EmbedInput),
    Snapshot(Vec<f64>),
}

/// Shared weights of every agent: encoder (psi), actor (theta), critic (phi).
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    /// Holds the encoder weights; its memory is never used.
    pub encoder: TgnEncoder,
    pub actor: Actor,
    pub critic: Critic,
    pub n_ues: usize,
    pub n_cells: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    model: ModelConfig,
    n_ues: usize,
    n_cells: usize,
}

impl Model {
    pub fn new(cfg: &ModelConfig, n_ues: usize, n_cells: usize) -> Result<Model> {
        Self::with_optimizer(cfg, n_ues, n_cells, [1e-3; 3], AdamConfig::default())
    }

    /// `rates` are indexed encoder, actor, critic.
    pub fn with_optimizer(
        cfg: &ModelConfig,
        n_ues: usize,
        n_cells: usize,
        rates: [f64; 3],
        adam: AdamConfig,
    ) -> Result<Model> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new(rates, adam);
        let params = TgnParams::new(&cfg.tgn, &mut store, &mut rng)?;
        let actor = Actor::new(&mut store, &cfg.policy, n_cells, &mut rng)?;
        let critic = Critic::new(&mut store, &cfg.policy, cfg.policy.obs_dim, &mut rng)?;
        Ok(Model {
            encoder: TgnEncoder::new(cfg.tgn.clone(), params, n_ues, n_cells),
            cfg: cfg.clone(),
            store,
            actor,
            critic,
            n_ues,
            n_cells,
        })
    }

    /// Fresh encoder state (zero memory) sharing this model's weights.
    pub fn fresh_encoder(&self) -> TgnEncoder {
        let mut e = self.encoder.clone();
        e.reset();
        e
    }

    pub fn observe(&self, tape: &Tape, obs: &Observation) -> Result<Var> {
        match obs {
            Observation::Graph(input) => Ok(self.encoder.embed(tape, &self.store, input)?),
            Observation::Snapshot(v) => {
                if v.len() != self.cfg.policy.obs_dim {
                    return Err(AgentError::Contract(format!(
                        "snapshot of {} values, expected {}",
                        v.len(),
                        self.cfg.policy.obs_dim
                    )));
                }
                Ok(tape.constant_row(v.clone()))
            }
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.store.save_checkpoint(dir)?;
        let manifest = ModelManifest {
            model: self.cfg.clone(),
            n_ues: self.n_ues,
            n_cells: self.n_cells,
        };
        fs::write(
            dir.join("model.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// Rebuilds the architecture recorded in `dir` and loads its weights.
    pub fn load(dir: &Path) -> Result<Model> {
        let text = fs::read_to_string(dir.join("model.json")).map_err(|e| {
            AgentError::Checkpoint(format!("{}: {e}", dir.join("model.json").display()))
        })?;
        let manifest: ModelManifest = serde_json::from_str(&text)?;
        let mut model = Model::new(&manifest.model, manifest.n_ues, manifest.n_cells)?;
        model.store.load_checkpoint(dir)?;
        Ok(model)
    }

    /// Loads a checkpoint into this model after checking the cell count.
    pub fn load_into(&mut self, dir: &Path) -> Result<()> {
        let loaded = Model::load(dir)?;
        if loaded.n_cells != self.n_cells || loaded.cfg != self.cfg {
            return Err(AgentError::Checkpoint(format!(
                "{} was trained for a different architecture",
                dir.display()
            )));
        }
        self.store.load_checkpoint(dir)?;
        Ok(())
    }
}
