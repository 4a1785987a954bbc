//! Episode loop: act, store, update when the buffer holds a full batch.

use serde::{Deserialize, Serialize};

use super::policy::{greedy_action, policy_forward, sample_action, PolicyParams};
use super::ppo::{PpoHyper, PpoLearner, RolloutBuffer, Transition};
use crate::error::{Error, Result};
use crate::seed::{self, TAG_POLICY};

/// Result of one environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Whether the slot's demand could be served.
    pub feasible: bool,
}

/// Anything the PPO loop can drive: one categorical head per action slot.
pub trait Environment {
    fn observation_len(&self) -> usize;
    fn heads(&self) -> usize;
    fn choices(&self) -> usize;
    /// Starts episode `episode`; equal indices give equal episodes.
    fn reset_episode(&mut self, episode: u64) -> Result<Vec<f64>>;
    fn act(&mut self, choices: &[usize]) -> Result<Feedback>;
    /// Relative cost of each head choice; training can start tilted toward
    /// cheap choices. Equal costs (the default) give a uniform start.
    fn choice_cost(&self) -> Vec<f64> {
        vec![0.0; self.choices()]
    }
    /// Observation indices that describe each head's own slot. When given,
    /// the heads can share one actor network.
    fn head_features(&self) -> Option<Vec<Vec<usize>>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Σ_t R(t).
    pub total_reward: f64,
    pub slots: usize,
    pub feasible_slots: usize,
}

impl EpisodeLog {
    pub fn mean_reward(&self) -> f64 {
        self.total_reward / self.slots.max(1) as f64
    }

    pub fn feasible_fraction(&self) -> f64 {
        self.feasible_slots as f64 / self.slots.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<EpisodeLog>,
}

/// How actions are picked when rolling out a fixed policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    /// Draw from the policy, as in training.
    #[default]
    Sample,
    /// Most likely choice per head.
    Greedy,
}

/// Trains a fresh policy for `episodes` episodes. Training episode `e`
/// resets the environment with index `e`.
pub fn train(env: &mut impl Environment, episodes: usize, hyper: &PpoHyper, seed: u64) -> Result<TrainOutcome> {
    hyper.validate()?;
    let mut init_rng = seed::stream(&[seed, TAG_POLICY, 0]);
    let target = hyper.critic_polyak.is_some();
    let mut params = match env.head_features().filter(|_| hyper.shared_actor) {
        Some(features) => {
            if features.len() != env.heads() {
                return Err(Error::Dimension(format!("{} head feature lists for {} heads", features.len(), env.heads())));
            }
            PolicyParams::shared(env.observation_len(), features, env.choices(), &hyper.hidden, target, &mut init_rng)?
        }
        None => PolicyParams::new(env.observation_len(), env.heads(), env.choices(), &hyper.hidden, target, &mut init_rng)?,
    };
    if hyper.init_cost_tilt > 0.0 {
        let logits: Vec<f64> = env.choice_cost().iter().map(|c| -hyper.init_cost_tilt * c).collect();
        params.set_initial_logits(&logits)?;
    }
    let mut learner = PpoLearner::new(params, hyper.clone())?;
    let mut act_rng = seed::stream(&[seed, TAG_POLICY, 1]);
    let mut update_rng = seed::stream(&[seed, TAG_POLICY, 2]);
    let mut buf = RolloutBuffer::new(0);
    let mut log = Vec::with_capacity(episodes);

    for episode in 0..episodes {
        let mut obs = env.reset_episode(episode as u64)?;
        let mut entry = EpisodeLog {
            episode,
            total_reward: 0.0,
            slots: 0,
            feasible_slots: 0,
        };
        loop {
            let dists = policy_forward(&obs, &learner.params)?;
            let (action, logprob) = sample_action(&dists, &mut act_rng);
            let value = learner.params.baseline_value(&obs)?;
            let fb = env.act(&action)?;
            entry.total_reward += fb.reward;
            entry.slots += 1;
            entry.feasible_slots += usize::from(fb.feasible);
            let done = fb.done;
            buf.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: fb.reward,
                next_obs: fb.obs.clone(),
                logprob,
                value,
                done,
            });
            obs = fb.obs;
            if done {
                break;
            }
        }
        if buf.capacity() == 0 {
            // episodes have a fixed horizon, so the first one sizes the batch
            buf.set_capacity(entry.slots * hyper.batch_episodes);
        }
        log.push(entry);
        if buf.is_full() {
            learner.set_progress(episode as f64 / episodes as f64);
            learner.update(&mut buf, &mut update_rng)?;
        }
    }
    Ok(TrainOutcome {
        params: learner.params,
        log,
    })
}

/// Runs one episode with fixed parameters and returns its log.
pub fn rollout(env: &mut impl Environment, params: &PolicyParams, episode: u64, mode: ActMode, seed: u64) -> Result<EpisodeLog> {
    let mut rng = seed::stream(&[seed, TAG_POLICY, 3, episode]);
    let mut obs = env.reset_episode(episode)?;
    let mut entry = EpisodeLog {
        episode: episode as usize,
        total_reward: 0.0,
        slots: 0,
        feasible_slots: 0,
    };
    loop {
        let dists = policy_forward(&obs, params)?;
        let action = match mode {
            ActMode::Greedy => greedy_action(&dists),
            ActMode::Sample => sample_action(&dists, &mut rng).0,
        };
        let fb = env.act(&action)?;
        entry.total_reward += fb.reward;
        entry.slots += 1;
        entry.feasible_slots += usize::from(fb.feasible);
        if fb.done {
            return Ok(entry);
        }
        obs = fb.obs;
    }
}
