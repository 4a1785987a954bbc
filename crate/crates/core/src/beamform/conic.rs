//! Second-order cone formulation solved with Clarabel's interior-point method.
//!
//! Decision vector: for user k and stacked index j, `x[2(kn+j)]` is Re w_{k,j}
//! and `x[2(kn+j)+1]` is Im w_{k,j}, with n = M·I. Channels are divided by
//! sqrt(N0·W) before assembly so the noise term in every cone is 1.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use super::{
    verify_beamformers, BeamformSolver, BeamformerSolution, BeamformingProblem, SolveStatus,
    FEASIBILITY_TOL,
};
use crate::channel::Beamformers;

#[derive(Debug, Clone)]
pub struct ConicSolver {
    pub max_iter: u32,
    /// Gap and feasibility tolerance handed to the interior-point method.
    pub tol: f64,
}

impl Default for ConicSolver {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    /// Adds `scale * conj(h)ᴴ-row` for Re(hᴴw) (re = true) or Im(hᴴw) into row `r`
    /// over the variables of user `user`. With h = a+ib, w = x+iy:
    /// Re(hᴴw) = a·x + b·y and Im(hᴴw) = a·y − b·x.
    fn inner_row(&mut self, r: usize, h: &[Complex64], user: usize, re: bool, scale: f64) {
        let n = h.len();
        for (j, c) in h.iter().enumerate() {
            let col = 2 * (user * n + j);
            if re {
                self.push(r, col, scale * c.re);
                self.push(r, col + 1, scale * c.im);
            } else {
                self.push(r, col, -scale * c.im);
                self.push(r, col + 1, scale * c.re);
            }
        }
    }
}

impl ConicSolver {
    fn assemble(
        &self,
        problem: &BeamformingProblem,
    ) -> (CscMatrix<f64>, Vec<f64>, CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>, f64) {
        let users = problem.users();
        let aps = problem.aps();
        let antennas = problem.antennas();
        let n = problem.stacked_len();
        let nvar = 2 * users * n;
        let sigma = problem.noise_power().sqrt();
        // Solve for x = w / s, with s² the interference-free power bound
        // Σ_k Γ_k σ²/‖h_k‖², so that the optimum is of order one.
        let bound: f64 = (0..users)
            .map(|k| {
                let g: f64 = problem.stacked_channel(k).iter().map(|c| c.norm_sqr()).sum();
                problem.targets()[k] * sigma * sigma / g
            })
            .sum();
        let s = if bound.is_finite() && bound > 0.0 { bound.sqrt() } else { 1.0 };
        let h: Vec<Vec<Complex64>> = (0..users)
            .map(|k| problem.stacked_channel(k).iter().map(|c| c * (s / sigma)).collect())
            .collect();

        let mut a = Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        };
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0;

        // Im(h_kᴴ w_k) = 0
        for (k, hk) in h.iter().enumerate() {
            a.inner_row(row, hk, k, false, -1.0);
            b.push(0.0);
            row += 1;
        }
        cones.push(SupportedConeT::ZeroConeT(users));

        // ‖[h_kᴴw_j (j≠k), 1]‖ <= Re(h_kᴴw_k)/sqrt(Γ_k)
        for (k, hk) in h.iter().enumerate() {
            let start = row;
            a.inner_row(row, hk, k, true, -1.0 / problem.targets()[k].sqrt());
            b.push(0.0);
            row += 1;
            for j in (0..users).filter(|&j| j != k) {
                a.inner_row(row, hk, j, true, -1.0);
                b.push(0.0);
                a.inner_row(row + 1, hk, j, false, -1.0);
                b.push(0.0);
                row += 2;
            }
            b.push(1.0);
            row += 1;
            cones.push(SupportedConeT::SecondOrderConeT(row - start));
        }

        // ‖(w_{k,m})_k‖ <= sqrt(P_m)
        for m in 0..aps {
            let start = row;
            b.push(problem.power_caps()[m].sqrt() / s);
            row += 1;
            for k in 0..users {
                for i in 0..antennas {
                    let col = 2 * (k * n + m * antennas + i);
                    a.push(row, col, -1.0);
                    a.push(row + 1, col + 1, -1.0);
                    b.push(0.0);
                    b.push(0.0);
                    row += 2;
                }
            }
            cones.push(SupportedConeT::SecondOrderConeT(row - start));
        }

        let a_mat = CscMatrix::new_from_triplets(row, nvar, a.rows, a.cols, a.vals);
        // ½xᵀPx with P = 2I gives Σ‖w‖².
        let p_mat = CscMatrix::new_from_triplets(
            nvar,
            nvar,
            (0..nvar).collect(),
            (0..nvar).collect(),
            vec![2.0; nvar],
        );
        (p_mat, vec![0.0; nvar], a_mat, b, cones, s)
    }
}

impl BeamformSolver for ConicSolver {
    fn solve(&self, problem: &BeamformingProblem) -> BeamformerSolution {
        let (p, q, a, b, cones, scale) = self.assemble(problem);
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .build()
        {
            Ok(s) => s,
            Err(_) => return BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, 0),
        };
        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => return BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, 0),
        };
        solver.solve();
        let sol = &solver.solution;
        let iterations = sol.iterations;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let n = problem.stacked_len();
                let mut w = Beamformers::zeros(problem.users(), problem.aps(), problem.antennas());
                for k in 0..problem.users() {
                    for (j, c) in w.stacked_mut(k).iter_mut().enumerate() {
                        let idx = 2 * (k * n + j);
                        *c = Complex64::new(sol.x[idx], sol.x[idx + 1]) * scale;
                    }
                }
                if verify_beamformers(&w, problem, FEASIBILITY_TOL) {
                    BeamformerSolution::feasible(w, iterations)
                } else {
                    BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, iterations)
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                BeamformerSolution::failed(problem, SolveStatus::Infeasible, iterations)
            }
            _ => BeamformerSolution::failed(problem, SolveStatus::NumericalFailure, iterations),
        }
    }
}
