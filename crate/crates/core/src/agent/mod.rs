//! PPO actor-critic controller for the per-tile level and compression choices.

mod checkpoint;
mod nn;
mod policy;
mod ppo;
mod train;

pub use checkpoint::{Architecture, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use nn::{clip_grad_norm, Adam, ForwardCache, Mlp};
pub use policy::{decode_action, greedy_action, joint_log_prob, policy_forward, sample_action, ActionCodec, PolicyParams};
pub use ppo::{
    actor_loss_grad, compute_returns_advantages, critic_loss_grad, ppo_clip_loss, PpoHyper, PpoLearner, RolloutBuffer,
    Sample, Transition, UpdateStats,
};
pub use train::{rollout, train, ActMode, EpisodeLog, Environment, Feedback, TrainOutcome};
