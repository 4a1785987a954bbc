//! Small dense networks with tanh hidden layers and hand-written backprop.
//!
//! Parameters live in one flat vector so the optimiser, checkpoints and
//! finite-difference checks can treat a network as a plain `&[f64]`.
//! Layer `i` stores its `out×in` weights row-major, followed by `out` biases.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[i]` the output of layer i (post-tanh for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Gaussian init scaled by 1/sqrt(fan_in); the last layer is further scaled
    /// by `out_scale` (0 gives an exactly zero output layer).
    pub fn new(sizes: &[usize], out_scale: f64, rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("network sizes must be >= 2 positive entries, got {sizes:?}")));
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (1.0 / fan_in as f64).sqrt() * if i == last { out_scale } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                params.push(z * scale);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("network sizes must be >= 2 positive entries, got {sizes:?}")));
        }
        if params.len() != param_count(&sizes) {
            return Err(Error::Dimension(format!(
                "{} parameters for architecture {sizes:?} (expected {})",
                params.len(),
                param_count(&sizes)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("validated in constructor")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Biases of the output layer (the last `output_len` parameters).
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        self.output_layer_mut().1
    }

    /// Output-layer weights (out × in, row-major) and biases.
    pub fn output_layer_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let out = self.output_len();
        let fan_in = self.sizes[self.sizes.len() - 2];
        let len = self.params.len();
        let (head, bias) = self.params.split_at_mut(len - out);
        let weights_start = head.len() - out * fan_in;
        (&mut head[weights_start..], bias)
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_len() {
            return Err(Error::Dimension(format!("network input has {} entries, expected {}", x.len(), self.input_len())));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let layers = self.sizes.len() - 1;
        let mut offset = 0;
        for (i, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = &acts[i];
            let mut out: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if i + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        if acts.last().is_some_and(|o| o.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite network activation".into()));
        }
        Ok(ForwardCache { acts })
    }

    /// Accumulates dL/dθ into `grad` given dL/d(output).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(grad_out.len(), self.output_len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for i in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[i], self.sizes[i + 1]);
            let input = &cache.acts[i];
            let base = offsets[i];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                grad[base + n_in * n_out + o] += d;
            }
            if i == 0 {
                break;
            }
            let weights = &self.params[base..base + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (row, d) in weights.chunks_exact(n_in).zip(&delta) {
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            // input to this layer is a tanh output: d tanh = 1 - a²
            prev.iter_mut().zip(input).for_each(|(p, a)| *p *= 1.0 - a * a);
            delta = prev;
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// L = Σ c_i·y_i for fixed random c, so dL/dy = c.
    fn probe_loss(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
        net.forward(x).unwrap().output().iter().zip(c).map(|(y, c)| y * c).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 6, 3], 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = net.forward(&x).unwrap();
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&cache, &c, &mut grad);
        let h = 1e-6;
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (probe_loss(&plus, &x, &c) - probe_loss(&minus, &x, &c)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(err < 1e-5 || (fd - grad[i]).abs() < 1e-9, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn zero_output_scale_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 3], 0.0, &mut rng).unwrap();
        let out = net.forward(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(out.output(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 3], 1.0, &mut rng).unwrap();
        assert!(matches!(net.forward(&[1.0; 3]), Err(Error::Dimension(_))));
        assert!(Mlp::from_params(vec![4, 3], vec![0.0; 3]).is_err());
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
