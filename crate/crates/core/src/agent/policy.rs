//! Factorised categorical policy: one head per (user, visible-tile) slot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{ForwardCache, Mlp};
use crate::error::{Error, Result};
use crate::media::{FovState, TileRequest, TileSelection};

/// Maps a head choice to a (level, compression) pair.
///
/// With compression enabled there are 2L choices and c ↦ (c mod L + 1, ⌊c/L⌋);
/// without it there are L choices and c ↦ (c + 1, uncompressed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCodec {
    pub levels: usize,
    pub compression: bool,
}

impl ActionCodec {
    pub fn new(levels: usize, compression: bool) -> Self {
        Self { levels, compression }
    }

    pub fn choices(&self) -> usize {
        if self.compression {
            2 * self.levels
        } else {
            self.levels
        }
    }

    pub fn decode(&self, c: usize) -> Result<(usize, bool)> {
        if c >= self.choices() {
            return Err(Error::Selection(format!("head choice {c} out of range 0..{}", self.choices())));
        }
        Ok((c % self.levels + 1, c / self.levels == 1))
    }

    pub fn encode(&self, level: usize, compressed: bool) -> Result<usize> {
        if level == 0 || level > self.levels || (compressed && !self.compression) {
            return Err(Error::Selection(format!("cannot encode level {level}, compressed={compressed}")));
        }
        Ok(level - 1 + usize::from(compressed) * self.levels)
    }
}

/// Turns one choice per head into a tile selection. Heads are ordered user by
/// user, and within a user in the FoV's tile order.
pub fn decode_action(choices: &[usize], codec: &ActionCodec, fov: &FovState) -> Result<TileSelection> {
    let heads: usize = fov.users.iter().map(Vec::len).sum();
    if choices.len() != heads {
        return Err(Error::Dimension(format!("{} head choices for {heads} visible tiles", choices.len())));
    }
    let mut it = choices.iter();
    let users = fov
        .users
        .iter()
        .map(|views| {
            views
                .iter()
                .map(|v| {
                    let c = *it.next().expect("length checked above");
                    let (level, compressed) = codec.decode(c)?;
                    Ok(TileRequest {
                        tile: v.tile,
                        level,
                        compressed,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TileSelection { users })
}

/// Running mean and variance of the critic's targets. The critic predicts
/// targets in standardised units; `value = mean + sd · output`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueScale {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for ValueScale {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 0.0,
        }
    }
}

impl ValueScale {
    const MIN_SD: f64 = 1e-4;

    pub fn sd(&self) -> f64 {
        self.var.sqrt().max(Self::MIN_SD)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        self.mean + self.sd() * y
    }

    /// Merges a batch into the running moments (parallel Welford update).
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let nb = xs.len() as f64;
        let mb = xs.iter().sum::<f64>() / nb;
        let vb = xs.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / nb;
        if self.count == 0.0 {
            *self = Self {
                mean: mb,
                var: vb,
                count: nb,
            };
            return;
        }
        let n = self.count + nb;
        let delta = mb - self.mean;
        let m2 = self.var * self.count + vb * nb + delta * delta * self.count * nb / n;
        self.mean += delta * nb / n;
        self.var = m2 / n;
        self.count = n;
    }
}

/// Actor and critic networks, plus an optional slowly tracking critic copy.
///
/// The actor comes in two shapes. Without `head_features` it maps the
/// observation to `heads × choices` logits. With them it is one network shared
/// by all heads: head `h` is fed the observation followed by `obs[i]` for every
/// `i` in `head_features[h]`, and returns that head's `choices` logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub critic_target: Option<Mlp>,
    pub heads: usize,
    pub choices: usize,
    #[serde(default)]
    pub head_features: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub value_scale: ValueScale,
}

/// Actor forward state: one cache per network evaluation.
pub(crate) struct ActorPass {
    caches: Vec<ForwardCache>,
    pub logits: Vec<f64>,
}

impl PolicyParams {
    /// The actor's output layer starts at zero, so every head starts uniform.
    pub fn new(obs_len: usize, heads: usize, choices: usize, hidden: &[usize], target: bool, rng: &mut impl Rng) -> Result<Self> {
        Self::build(obs_len, heads, choices, None, hidden, target, rng)
    }

    /// Policy whose heads share one actor network (see the type docs).
    pub fn shared(
        obs_len: usize,
        head_features: Vec<Vec<usize>>,
        choices: usize,
        hidden: &[usize],
        target: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::build(obs_len, head_features.len(), choices, Some(head_features), hidden, target, rng)
    }

    fn build(
        obs_len: usize,
        heads: usize,
        choices: usize,
        head_features: Option<Vec<Vec<usize>>>,
        hidden: &[usize],
        target: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || choices == 0 {
            return Err(Error::Config("policy needs at least one head and one choice".into()));
        }
        let (actor_in, actor_out) = match &head_features {
            Some(f) => (obs_len + check_head_features(f, obs_len)?, choices),
            None => (obs_len, heads * choices),
        };
        let mut actor_sizes = vec![actor_in];
        actor_sizes.extend_from_slice(hidden);
        actor_sizes.push(actor_out);
        let mut critic_sizes = vec![obs_len];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, 0.0, rng)?;
        let critic = Mlp::new(&critic_sizes, 1.0, rng)?;
        let critic_target = target.then(|| critic.clone());
        Ok(Self {
            actor,
            critic,
            critic_target,
            heads,
            choices,
            head_features,
            value_scale: ValueScale::default(),
        })
    }

    /// Expected actor layer sizes' input and output for this policy shape.
    pub(crate) fn actor_io(&self) -> Result<(usize, usize)> {
        let obs_len = self.obs_len();
        match &self.head_features {
            Some(f) => {
                if f.len() != self.heads {
                    return Err(Error::Config(format!("{} head feature lists for {} heads", f.len(), self.heads)));
                }
                Ok((obs_len + check_head_features(f, obs_len)?, self.choices))
            }
            None => Ok((obs_len, self.heads * self.choices)),
        }
    }

    pub(crate) fn actor_forward(&self, obs: &[f64]) -> Result<ActorPass> {
        let caches = match &self.head_features {
            None => vec![self.actor.forward(obs)?],
            Some(features) => features
                .iter()
                .map(|idx| {
                    let mut input = Vec::with_capacity(obs.len() + idx.len());
                    input.extend_from_slice(obs);
                    input.extend(idx.iter().map(|&i| obs[i]));
                    self.actor.forward(&input)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let logits = caches.iter().flat_map(|c| c.output().iter().copied()).collect();
        Ok(ActorPass { caches, logits })
    }

    /// Accumulates d loss / d actor parameters given d loss / d logits.
    pub(crate) fn actor_backward(&self, pass: &ActorPass, grad_logits: &[f64], grad: &mut [f64]) {
        let width = grad_logits.len() / pass.caches.len();
        for (cache, g) in pass.caches.iter().zip(grad_logits.chunks_exact(width)) {
            self.actor.backward(cache, g, grad);
        }
    }

    /// Sets every head's output bias to `logits` (one entry per choice).
    pub fn set_initial_logits(&mut self, logits: &[f64]) -> Result<()> {
        if logits.len() != self.choices || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("{} initial logits for {} choices", logits.len(), self.choices)));
        }
        // a shared actor has a single head's worth of output biases
        for head in self.actor.output_bias_mut().chunks_exact_mut(self.choices) {
            head.copy_from_slice(logits);
        }
        Ok(())
    }

    pub fn obs_len(&self) -> usize {
        self.critic.input_len()
    }

    /// Critic estimate used for advantages: the target copy when present.
    pub fn baseline_value(&self, obs: &[f64]) -> Result<f64> {
        let net = self.critic_target.as_ref().unwrap_or(&self.critic);
        Ok(self.value_scale.denormalize(net.forward(obs)?.output()[0]))
    }

    /// Folds `returns` into the value scale and rescales the critic output
    /// layers so that every value estimate is unchanged.
    pub fn rescale_values(&mut self, returns: &[f64]) {
        let old = self.value_scale;
        let mut new = old;
        new.update(returns);
        let (ratio, shift) = (old.sd() / new.sd(), (old.mean - new.mean) / new.sd());
        for net in std::iter::once(&mut self.critic).chain(self.critic_target.as_mut()) {
            let (w, b) = net.output_layer_mut();
            w.iter_mut().for_each(|v| *v *= ratio);
            b.iter_mut().for_each(|v| *v = *v * ratio + shift);
        }
        self.value_scale = new;
    }
}

/// All heads must read the same number of in-range features; returns that number.
fn check_head_features(features: &[Vec<usize>], obs_len: usize) -> Result<usize> {
    let len = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != len || f.iter().any(|&i| i >= obs_len)) {
        return Err(Error::Dimension(format!(
            "head features must have equal length and index into {obs_len} observation entries"
        )));
    }
    Ok(len)
}

/// Numerically stable in-place softmax over each `choices`-wide chunk.
pub(crate) fn softmax_heads(logits: &[f64], choices: usize) -> Vec<Vec<f64>> {
    logits
        .chunks_exact(choices)
        .map(|z| {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Per-head action probabilities.
pub fn policy_forward(obs: &[f64], params: &PolicyParams) -> Result<Vec<Vec<f64>>> {
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite observation".into()));
    }
    let pass = params.actor_forward(obs)?;
    Ok(softmax_heads(&pass.logits, params.choices))
}

/// Σ_h log p_h(a_h).
pub fn joint_log_prob(dists: &[Vec<f64>], choices: &[usize]) -> f64 {
    dists.iter().zip(choices).map(|(p, &c)| p[c].ln()).sum()
}

/// Independent categorical draw for every head; returns the choices and their joint log-probability.
pub fn sample_action(dists: &[Vec<f64>], rng: &mut impl Rng) -> (Vec<usize>, f64) {
    let choices: Vec<usize> = dists
        .iter()
        .map(|p| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            // rounding left u above the total: take the last choice with mass
            p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
        })
        .collect();
    let logp = joint_log_prob(dists, &choices);
    (choices, logp)
}

/// Most likely choice per head (first one on ties).
pub fn greedy_action(dists: &[Vec<f64>]) -> Vec<usize> {
    dists
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
