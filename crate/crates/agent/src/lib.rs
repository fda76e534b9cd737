//! Masked multi-agent handover control: action masks, the shared actor and
//! centralized critic, delay-regret rewards, rule-based baselines, the
//! simulator-facing environment and PPO training.

pub mod baselines;
pub mod env;
mod error;
pub mod mask;
pub mod model;
pub mod policy;
pub mod ppo;
pub mod presets;
pub mod reward;
pub mod rollout;
pub mod train;

pub use baselines::{ControllerKind, Decision, RlfConfig, RuleController};
pub use env::{EnvMetrics, HoEnv, Scenario};
pub use error::{AgentError, Result};
pub use mask::{apply_mask_renormalize, compute_masks, ActionMask, MaskConfig};
pub use model::{Model, ModelConfig, Observation};
pub use policy::{
    Actor, ActorOutput, Critic, DecisionRecord, HandoverAction, PolicyConfig, PolicyValues,
};
pub use ppo::{compute_gae, gae, update_step, LossStats, PpoConfig, RolloutBuffer};
pub use reward::{compute_reward, DelayMeter, DelayRecord};
pub use rollout::{run_episode, AgentRunner, Episode, EpisodeConfig, Selection, Transition};
pub use train::{collect_rollout, nearest_rank, train, IterationLog, TrainConfig, TrainOutcome};
