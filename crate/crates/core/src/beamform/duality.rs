//! Fixed-point backend based on uplink-downlink duality.
//!
//! For a fixed diagonal AP weighting Q = diag(q_m ⊗ I_I), the q-weighted
//! power minimisation has a virtual uplink whose powers λ solve
//!
//! ```text
//! λ_k = 1 / ((1 + 1/Γ_k) · h_kᴴ (Q + Σ_j λ_j h_j h_jᴴ)⁻¹ h_k)
//! ```
//!
//! (noise normalised to 1). The MMSE receive filters give the downlink
//! directions and a K×K linear system gives the downlink powers that meet
//! every SINR target with equality.
//!
//! Per-AP caps are handled through α* = min_w max_m g_m(w)/P_m, where
//! g_m is the power of AP m. By Lagrange duality α* equals the maximum of
//! f(q) = min_w Σ_m q_m g_m(w) over {q ≥ 0, Σ q_m P_m = 1}. Every evaluated
//! q yields a lower bound f(q) and a primal point with an upper bound
//! max_m g_m/P_m, so the outer loop stops as soon as one bound certifies the
//! answer: upper ≤ 1 means feasible, lower > 1 means infeasible.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{
    verify_beamformers, BeamformSolver, BeamformerSolution, BeamformingProblem, SolveStatus,
    FEASIBILITY_TOL,
};
use crate::channel::Beamformers;

#[derive(Debug, Clone)]
pub struct DualitySolver {
    pub max_outer: usize,
    pub max_fixed_point: usize,
    pub fixed_point_tol: f64,
    /// Exponent of the multiplicative weight update.
    pub step: f64,
}

impl Default for DualitySolver {
    fn default() -> Self {
        Self {
            max_outer: 400,
            max_fixed_point: 5000,
            fixed_point_tol: 1e-12,
            step: 0.5,
        }
    }
}

struct WeightedSolution {
    w: Beamformers,
    /// f(q) = Σ_k λ_k, the optimal q-weighted power.
    dual_value: f64,
    ap_power: Vec<f64>,
    iterations: u32,
}

impl DualitySolver {
    /// Minimum q-weighted power design, or `None` if the fixed point diverges
    /// (targets unreachable at any power) or the power system is singular.
    fn weighted_min_power(&self, h: &[DVector<Complex64>], problem: &BeamformingProblem, q: &[f64]) -> Option<WeightedSolution> {
        let users = h.len();
        let n = problem.stacked_len();
        let antennas = problem.antennas();
        let targets = problem.targets();

        let mut base = DMatrix::<Complex64>::zeros(n, n);
        for (m, &qm) in q.iter().enumerate() {
            for i in 0..antennas {
                let idx = m * antennas + i;
                base[(idx, idx)] = Complex64::new(qm, 0.0);
            }
        }

        let covariance = |lambda: &[f64]| {
            let mut s = base.clone();
            for (hj, &lj) in h.iter().zip(lambda) {
                s += hj * hj.adjoint() * Complex64::new(lj, 0.0);
            }
            s
        };

        let mut lambda = vec![0.0; users];
        let mut iterations = 0;
        let mut converged = false;
        for it in 0..self.max_fixed_point {
            iterations = it as u32 + 1;
            let chol = covariance(&lambda).cholesky()?;
            let mut next = vec![0.0; users];
            for k in 0..users {
                let quad = h[k].dotc(&chol.solve(&h[k])).re;
                if !(quad > 0.0) {
                    return None;
                }
                next[k] = 1.0 / ((1.0 + 1.0 / targets[k]) * quad);
            }
            let change = lambda
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs() / b.max(1e-300))
                .fold(0.0, f64::max);
            lambda = next;
            if lambda.iter().any(|l| !l.is_finite() || *l > 1e15) {
                return None;
            }
            if change < self.fixed_point_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }

        let chol = covariance(&lambda).cholesky()?;
        let dirs: Vec<DVector<Complex64>> = h
            .iter()
            .map(|hk| {
                let u = chol.solve(hk);
                let norm = u.norm();
                u / Complex64::new(norm, 0.0)
            })
            .collect();

        // Downlink powers meeting every target with equality:
        // p_k |h_kᴴu_k|²/Γ_k − Σ_{j≠k} p_j |h_kᴴu_j|² = 1
        let mut coupling = DMatrix::<f64>::zeros(users, users);
        for k in 0..users {
            for j in 0..users {
                let g = h[k].dotc(&dirs[j]).norm_sqr();
                coupling[(k, j)] = if j == k { g / targets[k] } else { -g };
            }
        }
        let powers = coupling.lu().solve(&DVector::from_element(users, 1.0))?;
        if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return None;
        }

        let mut w = Beamformers::zeros(users, problem.aps(), antennas);
        for k in 0..users {
            let amp = powers[k].sqrt();
            for (dst, src) in w.stacked_mut(k).iter_mut().zip(dirs[k].iter()) {
                *dst = src * amp;
            }
        }
        let ap_power = (0..problem.aps()).map(|m| w.ap_power(m)).collect();
        Some(WeightedSolution {
            w,
            dual_value: lambda.iter().sum(),
            ap_power,
            iterations,
        })
    }
}

impl BeamformSolver for DualitySolver {
    fn solve(&self, problem: &BeamformingProblem) -> BeamformerSolution {
        let sigma = problem.noise_power().sqrt();
        let h: Vec<DVector<Complex64>> = (0..problem.users())
            .map(|k| DVector::from_iterator(problem.stacked_len(), problem.stacked_channel(k).iter().map(|c| c / sigma)))
            .collect();
        let caps = problem.power_caps();
        let aps = caps.len();

        let mut q: Vec<f64> = caps.iter().map(|p| 1.0 / (aps as f64 * p)).collect();
        let mut lower = 0.0f64;
        let mut best: Option<(f64, Beamformers)> = None;
        let mut iterations = 0u32;

        for _ in 0..self.max_outer {
            let Some(sol) = self.weighted_min_power(&h, problem, &q) else {
                return BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, iterations);
            };
            iterations += sol.iterations;
            lower = lower.max(sol.dual_value);
            let ratios: Vec<f64> = sol.ap_power.iter().zip(caps).map(|(g, p)| g / p).collect();
            let upper = ratios.iter().copied().fold(0.0, f64::max);
            if best.as_ref().is_none_or(|(u, _)| upper < *u) {
                best = Some((upper, sol.w));
            }
            let best_upper = best.as_ref().map_or(f64::INFINITY, |(u, _)| *u);

            if best_upper <= 1.0 {
                let (_, w) = best.take().expect("best set above");
                if verify_beamformers(&w, problem, FEASIBILITY_TOL) {
                    return BeamformerSolution::feasible(w, iterations);
                }
                return BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, iterations);
            }
            if lower > 1.0 + 1e-9 {
                return BeamformerSolution::failed(problem, SolveStatus::Infeasible, iterations);
            }
            if aps == 1 {
                // One AP: f(q) is the answer itself and the bounds coincide.
                break;
            }

            // Shift weight toward APs above the current balance point.
            let f = sol.dual_value.max(1e-300);
            let floor = 1e-12 / caps.iter().copied().fold(0.0, f64::max);
            for (qm, r) in q.iter_mut().zip(&ratios) {
                *qm = (*qm * (r / f).powf(self.step)).max(floor);
            }
            let norm: f64 = q.iter().zip(caps).map(|(qm, p)| qm * p).sum();
            q.iter_mut().for_each(|qm| *qm /= norm);
        }

        // With one AP the bounds coincide, so anything left is just above 1.
        if aps == 1 && lower > 1.0 {
            return BeamformerSolution::failed(problem, SolveStatus::Infeasible, iterations);
        }
        BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, iterations)
    }
}
