//! Per-slot beamforming: find per-AP beamformers that meet every user's
//! SINR target under per-AP power caps.
//!
//! The SINR constraint is non-convex as written, but a common phase rotation
//! of w_k does not change any SINR, so we may require h_kᴴw_k to be real and
//! non-negative. The constraint then becomes the second-order cone
//!
//! ```text
//! Re(h_kᴴ w_k) >= sqrt(Γ_k) · ‖[ {h_kᴴ w_j}_{j≠k}, sqrt(N0·W) ]‖,   Im(h_kᴴ w_k) = 0
//! ```
//!
//! and the per-AP caps are cones too. Among feasible designs the solvers
//! return the minimum-total-power one.

mod conic;
mod duality;

pub use conic::ConicSolver;
pub use duality::DualitySolver;

use serde::{Deserialize, Serialize};

use crate::channel::{sinr_with_noise_power, Beamformers, ChannelRealization, NoiseModel};
use crate::error::{Error, Result};

/// Relative primal feasibility tolerance used to accept a solver answer.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// One slot's beamforming feasibility problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingProblem {
    channels: ChannelRealization,
    power_caps: Vec<f64>,
    targets: Vec<f64>,
    noise_power: f64,
}

impl BeamformingProblem {
    pub fn users(&self) -> usize {
        self.channels.users()
    }

    pub fn aps(&self) -> usize {
        self.channels.aps()
    }

    pub fn antennas(&self) -> usize {
        self.channels.antennas()
    }

    /// Length of each stacked vector, M·I.
    pub fn stacked_len(&self) -> usize {
        self.aps() * self.antennas()
    }

    pub fn channels(&self) -> &ChannelRealization {
        &self.channels
    }

    /// h_k = [h_{k,1}; …; h_{k,M}].
    pub fn stacked_channel(&self, k: usize) -> &[num_complex::Complex64] {
        self.channels.stacked(k)
    }

    pub fn power_caps(&self) -> &[f64] {
        &self.power_caps
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }
}

/// Stacks one slot's channels with SINR targets Γ_k and per-AP caps P_m.
pub fn build_problem(
    ch: &ChannelRealization,
    targets: &[f64],
    power_caps: &[f64],
    noise: &NoiseModel,
) -> Result<BeamformingProblem> {
    if targets.len() != ch.users() {
        return Err(Error::Dimension(format!(
            "{} SINR targets for {} users",
            targets.len(),
            ch.users()
        )));
    }
    if power_caps.len() != ch.aps() {
        return Err(Error::Dimension(format!(
            "{} power caps for {} APs",
            power_caps.len(),
            ch.aps()
        )));
    }
    if let Some(g) = targets.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::Domain(format!("SINR target must be positive and finite, got {g}")));
    }
    if let Some(p) = power_caps.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::Domain(format!("power cap must be positive and finite, got {p}")));
    }
    if ch.as_slice().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Domain("channel has non-finite entries".into()));
    }
    Ok(BeamformingProblem {
        channels: ch.clone(),
        power_caps: power_caps.to_vec(),
        targets: targets.to_vec(),
        noise_power: noise.power(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    /// The backend stopped without a usable answer either way.
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSolution {
    pub beamformers: Beamformers,
    pub status: SolveStatus,
    /// Σ_{k,m} ‖w_{k,m}‖² (W); zero unless feasible.
    pub total_power: f64,
    pub iterations: u32,
}

impl BeamformerSolution {
    pub(crate) fn failed(problem: &BeamformingProblem, status: SolveStatus, iterations: u32) -> Self {
        Self {
            beamformers: Beamformers::zeros(problem.users(), problem.aps(), problem.antennas()),
            status,
            total_power: 0.0,
            iterations,
        }
    }

    pub(crate) fn feasible(beamformers: Beamformers, iterations: u32) -> Self {
        let total_power = beamformers.total_power();
        Self {
            beamformers,
            status: SolveStatus::Feasible,
            total_power,
            iterations,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// A backend for the per-slot problem. Implementations hold only settings,
/// so one instance can be shared across worker threads.
pub trait BeamformSolver: Send + Sync {
    fn solve(&self, problem: &BeamformingProblem) -> BeamformerSolution;
}

/// Minimum-power solve with the default conic backend.
pub fn solve(problem: &BeamformingProblem) -> BeamformerSolution {
    ConicSolver::default().solve(problem)
}

/// Checks per-AP power ≤ P_m(1+tol) and SINR ≥ Γ_k(1−tol) for the
/// beamformers in `sol`, whatever its reported status.
pub fn verify_solution(sol: &BeamformerSolution, problem: &BeamformingProblem, tol: f64) -> bool {
    verify_beamformers(&sol.beamformers, problem, tol)
}

pub fn verify_beamformers(w: &Beamformers, problem: &BeamformingProblem, tol: f64) -> bool {
    if w.shape() != problem.channels.shape() {
        return false;
    }
    let power_ok = (0..problem.aps()).all(|m| w.ap_power(m) <= problem.power_caps[m] * (1.0 + tol));
    power_ok
        && (0..problem.users()).all(|k| {
            sinr_with_noise_power(&problem.channels, w, problem.noise_power, k)
                .is_ok_and(|g| g >= problem.targets[k] * (1.0 - tol))
        })
}

/// Single-user maximum-ratio transmission at exactly the target SINR.
/// Minimum total power is Γ·N0W/‖h‖².
pub fn mrt_beamformer(problem: &BeamformingProblem) -> Result<Beamformers> {
    if problem.users() != 1 {
        return Err(Error::Dimension("MRT closed form needs a single user".into()));
    }
    let h = problem.stacked_channel(0);
    let gain: f64 = h.iter().map(|c| c.norm_sqr()).sum();
    let power = problem.targets[0] * problem.noise_power / gain;
    let scale = (power / gain).sqrt();
    let mut w = Beamformers::zeros(1, problem.aps(), problem.antennas());
    for (dst, src) in w.stacked_mut(0).iter_mut().zip(h) {
        *dst = src * scale;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_gain, LinkTensor};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_channel(rng: &mut ChaCha8Rng, users: usize, aps: usize, antennas: usize) -> LinkTensor {
        let data = (0..users * aps * antennas)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        LinkTensor::from_vec(users, aps, antennas, data).unwrap()
    }

    #[test]
    fn stacking_matches_per_ap_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = random_channel(&mut rng, 2, 2, 2);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        let p = build_problem(&ch, &[1.0, 1.0], &[1.0, 1.0], &noise).unwrap();
        assert_eq!(p.stacked_channel(0).len(), 4);
        assert_eq!(&p.stacked_channel(1)[2..4], ch.link(1, 1));

        for _ in 0..20 {
            let w = random_channel(&mut rng, 2, 2, 2);
            for k in 0..2 {
                for j in 0..2 {
                    let direct: Complex64 = (0..2)
                        .map(|m| {
                            ch.link(k, m)
                                .iter()
                                .zip(w.link(j, m))
                                .map(|(h, w)| h.conj() * w)
                                .sum::<Complex64>()
                        })
                        .sum();
                    assert!((effective_gain(&ch, &w, k, j) - direct).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_ap_stacking_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = random_channel(&mut rng, 1, 1, 3);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        let p = build_problem(&ch, &[2.0], &[1.0], &noise).unwrap();
        assert_eq!(p.stacked_channel(0), ch.link(0, 0));
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let ch = LinkTensor::zeros(2, 2, 2);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        assert!(matches!(build_problem(&ch, &[1.0], &[1.0, 1.0], &noise), Err(Error::Dimension(_))));
        assert!(matches!(build_problem(&ch, &[1.0, 1.0], &[1.0], &noise), Err(Error::Dimension(_))));
        assert!(matches!(build_problem(&ch, &[1.0, f64::INFINITY], &[1.0, 1.0], &noise), Err(Error::Domain(_))));
        assert!(matches!(build_problem(&ch, &[1.0, 1.0], &[0.0, 1.0], &noise), Err(Error::Domain(_))));
    }

    #[test]
    fn verify_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channel(&mut rng, 1, 1, 4);
        let noise = NoiseModel::new(0.1, 1.0).unwrap();
        let gamma = 3.0;
        let gain: f64 = ch.stacked(0).iter().map(|c| c.norm_sqr()).sum();
        let min_power = gamma * 0.1 / gain;
        let p = build_problem(&ch, &[gamma], &[min_power * 1.5], &noise).unwrap();
        let w = mrt_beamformer(&p).unwrap();
        assert!((w.total_power() - min_power).abs() <= 1e-12 * min_power);
        let sol = BeamformerSolution::feasible(w.clone(), 0);
        assert!(verify_solution(&sol, &p, 1e-6));

        let mut half = w.clone();
        for c in half.stacked_mut(0) {
            *c *= 0.5;
        }
        assert!(!verify_beamformers(&half, &p, 1e-6));
        assert!(!verify_beamformers(&Beamformers::zeros(1, 1, 4), &p, 1e-6));

        // exact-power MRT fails once the cap drops below the minimum power
        let tight = build_problem(&ch, &[gamma], &[min_power * 0.9], &noise).unwrap();
        assert!(!verify_beamformers(&w, &tight, 1e-6));
    }

    #[test]
    fn phase_rotation_preserves_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = NoiseModel::new(0.05, 1.0).unwrap();
        for _ in 0..50 {
            let ch = random_channel(&mut rng, 3, 2, 2);
            let w = random_channel(&mut rng, 3, 2, 2);
            let before = crate::channel::sinr_all(&ch, &w, &noise).unwrap();
            let mut rotated = w.clone();
            let k = rng.random_range(0..3);
            let phase = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            for c in rotated.stacked_mut(k) {
                *c *= phase;
            }
            let after = crate::channel::sinr_all(&ch, &rotated, &noise).unwrap();
            for (a, b) in before.iter().zip(&after) {
                assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            }
        }
    }
}
