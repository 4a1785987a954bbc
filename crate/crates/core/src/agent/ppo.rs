//! Clipped-surrogate PPO on the factorised policy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam, Mlp};
use super::policy::{softmax_heads, PolicyParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// ε in the clipped surrogate.
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Whole episodes collected before each update; buffer capacity is this times T.
    pub batch_episodes: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Train the critic on standardised returns (running mean and variance).
    pub normalize_values: bool,
    /// Polyak rate for a critic copy used as the advantage baseline; off when unset.
    pub critic_polyak: Option<f64>,
    /// Initial logit of each choice is −tilt × its cost (see `Environment::choice_cost`).
    pub init_cost_tilt: f64,
    /// Share one actor network across heads when the environment provides per-head features.
    pub shared_actor: bool,
    /// Decay both learning rates linearly to zero over the training run.
    pub lr_anneal: bool,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            batch_episodes: 8,
            gamma: 0.9,
            gae_lambda: 0.5,
            entropy_coef: 0.003,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            normalize_values: true,
            critic_polyak: None,
            init_cost_tilt: 1.0,
            shared_actor: true,
            lr_anneal: false,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo.{m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list positive layer widths");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must be in (0,1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must be in [0,1]");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.batch_episodes == 0 {
            return bad("epochs, minibatch and batch_episodes must be >= 1");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.max_grad_norm > 0.0 && self.entropy_coef >= 0.0) {
            return bad("learning rates and max_grad_norm must be > 0, entropy_coef >= 0");
        }
        if !(self.init_cost_tilt.is_finite() && self.init_cost_tilt >= 0.0) {
            return bad("init_cost_tilt must be finite and >= 0");
        }
        if let Some(rho) = self.critic_polyak {
            if !(rho > 0.0 && rho <= 1.0) {
                return bad("critic_polyak must be in (0,1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<usize>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Joint log-probability of `action` under the policy that acted.
    pub logprob: f64,
    /// Critic estimate V(obs) at acting time.
    pub value: f64,
    pub done: bool,
}

/// On-policy storage; emptied by every update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    capacity: usize,
    transitions: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            transitions: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity;
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }
}

/// Discounted returns G(t) and GAE(λ) advantages D(t).
///
/// Transitions must form complete episodes: the last one has to be terminal.
/// Values after a terminal step count as zero.
pub fn compute_returns_advantages(transitions: &[Transition], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if transitions.last().is_some_and(|t| !t.done) {
        return Err(Error::Domain("buffer ends mid-episode".into()));
    }
    let n = transitions.len();
    let mut returns = vec![0.0; n];
    let mut adv = vec![0.0; n];
    let mut g = 0.0;
    let mut a = 0.0;
    for i in (0..n).rev() {
        let t = &transitions[i];
        let (next_value, carry) = if t.done {
            (0.0, 0.0)
        } else {
            (transitions[i + 1].value, 1.0)
        };
        g = t.reward + gamma * carry * g;
        let delta = t.reward + gamma * next_value - t.value;
        a = delta + gamma * lambda * carry * a;
        returns[i] = g;
        adv[i] = a;
    }
    Ok((returns, adv))
}

/// Per-sample clipped surrogate, written as the explicit three-branch form.
pub fn ppo_clip_loss(ratio: f64, advantage: f64, eps: f64) -> f64 {
    if ratio <= 1.0 - eps && advantage < 0.0 {
        (1.0 - eps) * advantage
    } else if ratio >= 1.0 + eps && advantage > 0.0 {
        (1.0 + eps) * advantage
    } else {
        ratio * advantage
    }
}

fn surrogate_is_clipped(ratio: f64, advantage: f64, eps: f64) -> bool {
    (ratio <= 1.0 - eps && advantage < 0.0) || (ratio >= 1.0 + eps && advantage > 0.0)
}

/// One row of an update minibatch. `ret` is in the critic's output units.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: &'a [usize],
    pub old_logprob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Actor loss −mean(surrogate + c·entropy) and its gradient.
pub fn actor_loss_grad(params: &PolicyParams, samples: &[Sample<'_>], eps: f64, entropy_coef: f64) -> Result<(f64, Vec<f64>)> {
    let n = samples.len() as f64;
    let mut grad = vec![0.0; params.actor.params().len()];
    let mut loss = 0.0;
    for s in samples {
        let pass = params.actor_forward(s.obs)?;
        let dists = softmax_heads(&pass.logits, params.choices);
        let logp: f64 = dists.iter().zip(s.action).map(|(p, &a)| p[a].ln()).sum();
        let ratio = (logp - s.old_logprob).exp();
        loss -= ppo_clip_loss(ratio, s.advantage, eps) / n;
        // d surrogate / d logπ
        let g = if surrogate_is_clipped(ratio, s.advantage, eps) {
            0.0
        } else {
            ratio * s.advantage
        };
        let mut grad_out = Vec::with_capacity(pass.logits.len());
        for (p, &a) in dists.iter().zip(s.action) {
            let plogp = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
            let entropy: f64 = -p.iter().map(|&v| plogp(v)).sum::<f64>();
            loss -= entropy_coef * entropy / n;
            for (j, &pj) in p.iter().enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                let d_surr = g * (onehot - pj);
                let d_ent = -(plogp(pj) + pj * entropy);
                grad_out.push(-(d_surr + entropy_coef * d_ent) / n);
            }
        }
        params.actor_backward(&pass, &grad_out, &mut grad);
    }
    Ok((loss, grad))
}

/// Critic loss mean((V − G)²) and its gradient.
pub fn critic_loss_grad(critic: &Mlp, samples: &[Sample<'_>]) -> Result<(f64, Vec<f64>)> {
    let n = samples.len() as f64;
    let mut grad = vec![0.0; critic.params().len()];
    let mut loss = 0.0;
    for s in samples {
        let cache = critic.forward(s.obs)?;
        let err = cache.output()[0] - s.ret;
        loss += err * err / n;
        critic.backward(&cache, &[2.0 * err / n], &mut grad);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Mean critic loss over the first and the last epoch.
    pub value_loss_first: f64,
    pub value_loss_last: f64,
    pub policy_loss_last: f64,
}

/// Policy parameters together with their optimiser state.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub params: PolicyParams,
    pub hyper: PpoHyper,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl PpoLearner {
    pub fn new(params: PolicyParams, hyper: PpoHyper) -> Result<Self> {
        hyper.validate()?;
        let actor_opt = Adam::new(params.actor.params().len(), hyper.actor_lr);
        let critic_opt = Adam::new(params.critic.params().len(), hyper.critic_lr);
        Ok(Self {
            params,
            hyper,
            actor_opt,
            critic_opt,
        })
    }

    /// Scales both learning rates by `1 - progress` when annealing is on.
    pub fn set_progress(&mut self, progress: f64) {
        if self.hyper.lr_anneal {
            let keep = (1.0 - progress).clamp(0.0, 1.0);
            self.actor_opt.lr = self.hyper.actor_lr * keep;
            self.critic_opt.lr = self.hyper.critic_lr * keep;
        }
    }

    /// Runs the configured epochs of minibatch updates on the buffer's
    /// episodes and empties it. Ratios are taken against the log-probabilities
    /// recorded at acting time, i.e. the frozen pre-update policy.
    pub fn update(&mut self, buf: &mut RolloutBuffer, rng: &mut impl Rng) -> Result<UpdateStats> {
        let h = &self.hyper;
        let transitions = buf.transitions();
        if transitions.is_empty() {
            return Ok(UpdateStats::default());
        }
        let (mut returns, mut adv) = compute_returns_advantages(transitions, h.gamma, h.gae_lambda)?;
        if h.normalize_values {
            self.params.rescale_values(&returns);
        }
        let scale = self.params.value_scale;
        returns.iter_mut().for_each(|g| *g = scale.normalize(*g));
        if h.normalize_advantages && adv.len() > 1 {
            let mean = adv.iter().sum::<f64>() / adv.len() as f64;
            let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64;
            let sd = var.sqrt();
            adv.iter_mut().for_each(|a| *a = (*a - mean) / (sd + 1e-8));
        }
        let samples: Vec<Sample<'_>> = transitions
            .iter()
            .zip(returns.iter().zip(&adv))
            .map(|(t, (&ret, &advantage))| Sample {
                obs: &t.obs,
                action: &t.action,
                old_logprob: t.logprob,
                advantage,
                ret,
            })
            .collect();

        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut stats = UpdateStats::default();
        for epoch in 0..h.epochs {
            order.shuffle(rng);
            let mut value_loss = 0.0;
            let mut policy_loss = 0.0;
            for chunk in order.chunks(h.minibatch) {
                let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| samples[i]).collect();
                let w = batch.len() as f64 / samples.len() as f64;

                let (pl, mut g) = actor_loss_grad(&self.params, &batch, h.clip, h.entropy_coef)?;
                check_finite(&g, "actor")?;
                clip_grad_norm(&mut g, h.max_grad_norm);
                self.actor_opt.step(self.params.actor.params_mut(), &g);
                policy_loss += pl * w;

                let (vl, mut g) = critic_loss_grad(&self.params.critic, &batch)?;
                check_finite(&g, "critic")?;
                clip_grad_norm(&mut g, h.max_grad_norm);
                self.critic_opt.step(self.params.critic.params_mut(), &g);
                value_loss += vl * w;
            }
            if epoch == 0 {
                stats.value_loss_first = value_loss;
            }
            stats.value_loss_last = value_loss;
            stats.policy_loss_last = policy_loss;
        }
        if let (Some(rho), Some(target)) = (h.critic_polyak, self.params.critic_target.as_mut()) {
            for (t, c) in target.params_mut().iter_mut().zip(self.params.critic.params()) {
                *t = (1.0 - rho) * *t + rho * c;
            }
        }
        buf.clear();
        Ok(stats)
    }
}

fn check_finite(g: &[f64], which: &str) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {which} gradient")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn annealing_scales_rates_with_progress() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = PolicyParams::new(2, 1, 2, &[4], false, &mut rng).unwrap();
        let hyper = PpoHyper { lr_anneal: true, ..PpoHyper::default() };
        let mut learner = PpoLearner::new(params.clone(), hyper.clone()).unwrap();
        learner.set_progress(0.75);
        assert!((learner.actor_opt.lr - 0.25 * hyper.actor_lr).abs() < 1e-15);
        assert!((learner.critic_opt.lr - 0.25 * hyper.critic_lr).abs() < 1e-15);

        let mut fixed = PpoLearner::new(params, PpoHyper::default()).unwrap();
        fixed.set_progress(0.75);
        assert_eq!(fixed.actor_opt.lr, PpoHyper::default().actor_lr);
    }

    fn transition(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            obs: vec![],
            action: vec![],
            reward,
            next_obs: vec![],
            logprob: 0.0,
            value,
            done,
        }
    }

    #[test]
    fn zero_discount_returns_rewards() {
        let ts: Vec<_> = [1.0, -2.0, 3.5].iter().enumerate().map(|(i, &r)| transition(r, 0.3, i == 2)).collect();
        let (g, _) = compute_returns_advantages(&ts, 0.0, 0.95).unwrap();
        assert_eq!(g, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn undiscounted_unit_rewards() {
        let ts: Vec<_> = (0..3).map(|i| transition(1.0, 0.0, i == 2)).collect();
        let (g, _) = compute_returns_advantages(&ts, 1.0, 1.0).unwrap();
        assert_eq!(g, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn episodes_do_not_leak_returns() {
        let ts = vec![transition(1.0, 0.0, true), transition(5.0, 0.0, true)];
        let (g, _) = compute_returns_advantages(&ts, 0.9, 1.0).unwrap();
        assert_eq!(g, vec![1.0, 5.0]);
    }

    #[test]
    fn truncated_buffer_is_rejected() {
        let ts = vec![transition(1.0, 0.0, false)];
        assert!(compute_returns_advantages(&ts, 0.9, 1.0).is_err());
    }

    #[test]
    fn clip_loss_examples() {
        assert_eq!(ppo_clip_loss(1.0, -3.7, 0.2), -3.7);
        assert!((ppo_clip_loss(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((ppo_clip_loss(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_leaves_actor_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = PolicyParams::new(3, 2, 4, &[8], false, &mut rng).unwrap();
        params.actor.params_mut().iter_mut().for_each(|p| *p += 0.1);
        let before = params.actor.clone();
        let hyper = PpoHyper {
            entropy_coef: 0.0,
            normalize_advantages: false,
            gamma: 0.0,
            ..PpoHyper::default()
        };
        let mut learner = PpoLearner::new(params, hyper).unwrap();
        let mut buf = RolloutBuffer::new(8);
        for i in 0..8 {
            // value equals the reward and γ=0, so every advantage is exactly 0
            let v = learner.params.critic.forward(&[0.1 * i as f64, 0.0, 1.0]).unwrap().output()[0];
            buf.push(Transition {
                obs: vec![0.1 * i as f64, 0.0, 1.0],
                action: vec![i % 4, 1],
                reward: v,
                next_obs: vec![0.0; 3],
                logprob: -1.0,
                value: v,
                done: true,
            });
        }
        learner.update(&mut buf, &mut rng).unwrap();
        assert_eq!(learner.params.actor, before);
        assert!(buf.is_empty());
    }

    #[test]
    fn polyak_target_moves_toward_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = PolicyParams::new(2, 1, 2, &[4], true, &mut rng).unwrap();
        let hyper = PpoHyper {
            critic_polyak: Some(0.5),
            // keep the output layers free of rescaling so the blend is exact
            normalize_values: false,
            ..PpoHyper::default()
        };
        let mut learner = PpoLearner::new(params, hyper).unwrap();
        let start = learner.params.critic_target.clone().unwrap();
        let mut buf = RolloutBuffer::new(4);
        for i in 0..4 {
            buf.push(Transition {
                obs: vec![i as f64, 1.0],
                action: vec![i % 2],
                reward: 10.0,
                next_obs: vec![0.0; 2],
                logprob: -(2.0f64.ln()),
                value: 0.0,
                done: true,
            });
        }
        learner.update(&mut buf, &mut rng).unwrap();
        let target = learner.params.critic_target.as_ref().unwrap();
        for ((t, s), c) in target.params().iter().zip(start.params()).zip(learner.params.critic.params()) {
            assert!((t - 0.5 * (s + c)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn clip_loss_never_exceeds_unclipped(r in 1e-3f64..5.0, d in -10.0f64..10.0, eps in 0.01f64..0.99) {
            prop_assert!(ppo_clip_loss(r, d, eps) <= r * d);
        }

        #[test]
        fn gae_with_unit_lambda_is_return_minus_value(
            rewards in proptest::collection::vec(-5.0f64..5.0, 1..30),
            values in proptest::collection::vec(-5.0f64..5.0, 30),
            gamma in 0.0f64..1.0,
        ) {
            let n = rewards.len();
            let ts: Vec<_> = (0..n).map(|i| transition(rewards[i], values[i], i + 1 == n)).collect();
            let (g, a) = compute_returns_advantages(&ts, gamma, 1.0).unwrap();
            for i in 0..n {
                prop_assert!((a[i] - (g[i] - values[i])).abs() <= 1e-10 * g[i].abs().max(1.0));
            }
        }
    }
}
