use std::path::PathBuf;

use ran_sim::a3::A3Config;
use ran_sim::radio::argmax;
use ran_sim::{HoState, World};
use serde::{Deserialize, Serialize};

use crate::error::{AgentError, Result};

/// Radio-link-failure rule used by the no-mobility-management baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlfConfig {
    pub threshold_dbm: f64,
    pub window_ms: f64,
}

impl Default for RlfConfig {
    fn default() -> Self {
        RlfConfig {
            threshold_dbm: -110.0,
            window_ms: 500.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerKind {
    A3 {
        #[serde(default)]
        a3: Option<A3Config>,
    },
    NoMm {
        #[serde(default)]
        rlf: Option<RlfConfig>,
    },
    Learned {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    LearnedNoMask {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    LearnedSnapshot {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
}

impl ControllerKind {
    pub fn a3() -> Self {
        ControllerKind::A3 { a3: None }
    }

    pub fn no_mm() -> Self {
        ControllerKind::NoMm { rlf: None }
    }

    pub fn learned() -> Self {
        ControllerKind::Learned { checkpoint: None }
    }

    pub fn learned_no_mask() -> Self {
        ControllerKind::LearnedNoMask { checkpoint: None }
    }

    pub fn learned_snapshot() -> Self {
        ControllerKind::LearnedSnapshot { checkpoint: None }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(
            self,
            ControllerKind::A3 { .. } | ControllerKind::NoMm { .. }
        )
    }

    pub fn uses_mask(&self) -> bool {
        !matches!(self, ControllerKind::LearnedNoMask { .. })
    }

    pub fn uses_snapshot(&self) -> bool {
        matches!(self, ControllerKind::LearnedSnapshot { .. })
    }

    pub fn checkpoint(&self) -> Option<&PathBuf> {
        match self {
            ControllerKind::Learned { checkpoint }
            | ControllerKind::LearnedNoMask { checkpoint }
            | ControllerKind::LearnedSnapshot { checkpoint } => checkpoint.as_ref(),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::A3 { .. } => "a3",
            ControllerKind::NoMm { .. } => "no_mm",
            ControllerKind::Learned { .. } => "learned",
            ControllerKind::LearnedNoMask { .. } => "learned_no_mask",
            ControllerKind::LearnedSnapshot { .. } => "learned_snapshot",
        }
    }

    /// A named checkpoint directory must exist before a run starts.
    pub fn validate(&self) -> Result<()> {
        if let Some(path) = self.checkpoint() {
            if !path.join("manifest.json").is_file() {
                return Err(AgentError::Checkpoint(format!(
                    "{} has no manifest.json",
                    path.display()
                )));
            }
        }
        if let ControllerKind::A3 { a3: Some(cfg) } = self {
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    Handover { target: usize, kappa: Option<f64> },
    Reestablish { target: usize },
}

/// Per-UE state of a rule-based controller.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleController {
    kind: ControllerKind,
    a3: A3Config,
    rlf: RlfConfig,
    below_since_us: Option<u64>,
}

impl RuleController {
    /// `a3` and `rlf` are the scenario defaults, overridden by the kind.
    pub fn new(kind: ControllerKind, a3: A3Config, rlf: RlfConfig) -> Self {
        let (a3, rlf) = match &kind {
            ControllerKind::A3 { a3: Some(c) } => (*c, rlf),
            ControllerKind::NoMm { rlf: Some(r) } => (a3, *r),
            _ => (a3, rlf),
        };
        RuleController {
            kind,
            a3,
            rlf,
            below_since_us: None,
        }
    }

    pub fn kind(&self) -> &ControllerKind {
        &self.kind
    }

    /// Called right after each radio measurement. A3 delegates to the
    /// simulator's A3 rule; No-MM only acts on radio-link failure. Learned
    /// kinds decide elsewhere and return nothing here.
    pub fn decide(&mut self, world: &mut World, ue: usize, elapsed_us: u64) -> Option<Decision> {
        if world.ue(ue).ho_state != HoState::Idle {
            self.below_since_us = None;
            return None;
        }
        match self.kind {
            ControllerKind::A3 { .. } => {
                world
                    .evaluate_a3(ue, &self.a3, elapsed_us)
                    .map(|target| Decision::Handover {
                        target,
                        kappa: None,
                    })
            }
            ControllerKind::NoMm { .. } => {
                let radio = world.radio(ue);
                let now = radio.timestamp_us;
                if radio.serving_rsrp() >= self.rlf.threshold_dbm {
                    self.below_since_us = None;
                    return None;
                }
                let since = *self.below_since_us.get_or_insert(now);
                if now - since >= (self.rlf.window_ms * 1000.0).round() as u64 {
                    self.below_since_us = None;
                    Some(Decision::Reestablish {
                        target: argmax(&radio.rsrp_dbm),
                    })
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_json() {
        let kinds = vec![
            ControllerKind::A3 {
                a3: Some(A3Config {
                    hysteresis_db: 2.0,
                    time_to_trigger_ms: 0.0,
                }),
            },
            ControllerKind::no_mm(),
            ControllerKind::Learned {
                checkpoint: Some("ckpt".into()),
            },
            ControllerKind::learned_no_mask(),
            ControllerKind::learned_snapshot(),
        ];
        let text = serde_json::to_string(&kinds).unwrap();
        let back: Vec<ControllerKind> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, kinds);
        let parsed: ControllerKind = serde_json::from_str(r#"{"kind": "no_mm"}"#).unwrap();
        assert_eq!(parsed, ControllerKind::no_mm());
    }

    #[test]
    fn missing_checkpoint_fails_validation() {
        let k = ControllerKind::Learned {
            checkpoint: Some("/nonexistent/ckpt".into()),
        };
        assert!(matches!(k.validate(), Err(AgentError::Checkpoint(_))));
        assert!(ControllerKind::learned().validate().is_ok());
    }
}
