//! Gap filling by atomic-norm minimization.
//!
//! The completion problem is the semidefinite program
//!
//! ```text
//! minimize   trace(Toep(u)) / (2K) + t / 2
//! subject to [[Toep(u), x], [xᴴ, t]] ⪰ 0,   x_Ω = observed
//! ```
//!
//! solved with ADMM on the split Θ(u, x, t) = Z, Z ⪰ 0. The Θ step is a
//! closed-form average over Toeplitz diagonals and free entries, the Z step a
//! PSD projection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, eig_hermitian_warm_tol, psd_from_eigen, CMatrix};
use crate::reconstruct::TwoWayResponse;

/// Relative off-diagonal tolerance of the per-iteration eigensolves.
const PROJECTION_TOL: f64 = 1e-10;

/// Observed samples of a length-K vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AnmProblem {
    num_tones: usize,
    observed: Vec<Option<Complex64>>,
}

impl AnmProblem {
    /// `observed[k]` is `Some(value)` for tones in Ω.
    pub fn new(observed: Vec<Option<Complex64>>) -> Result<Self> {
        if observed.iter().all(Option::is_none) {
            return Err(Error::NoData);
        }
        Ok(Self {
            num_tones: observed.len(),
            observed,
        })
    }

    pub fn from_response(resp: &TwoWayResponse) -> Result<Self> {
        Self::new(
            resp.h_sq
                .iter()
                .zip(&resp.available)
                .map(|(&v, &a)| a.then_some(v))
                .collect(),
        )
    }

    pub fn num_tones(&self) -> usize {
        self.num_tones
    }

    pub fn observed(&self) -> &[Option<Complex64>] {
        &self.observed
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.num_tones).filter(|&k| self.observed[k].is_none()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnmConfig {
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Over-relaxation factor in (0, 2); 1 is plain ADMM.
    pub relaxation: f64,
    /// Rescale rho when one residual dominates the other by 10×.
    pub adaptive_rho: bool,
}

impl Default for AnmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 100,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            relaxation: 1.6,
            adaptive_rho: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnmSolution {
    /// Completed vector; equals the observations on Ω.
    pub h_sq_full: Vec<Complex64>,
    /// Toeplitz generator (first row).
    pub u: Vec<Complex64>,
    pub t: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// False when `max_iter` was reached before the residual tolerances.
    pub converged: bool,
    /// Residual norms per iteration.
    pub history: Vec<(f64, f64)>,
}

impl AnmSolution {
    /// The block matrix [[Toep(u), x], [xᴴ, t]].
    pub fn block_matrix(&self) -> CMatrix {
        block(&self.u, &self.h_sq_full, self.t)
    }
}

fn toeplitz_entry(u: &[Complex64], i: usize, j: usize) -> Complex64 {
    if j >= i {
        u[j - i]
    } else {
        u[i - j].conj()
    }
}

fn block(u: &[Complex64], x: &[Complex64], t: f64) -> CMatrix {
    let k = x.len();
    CMatrix::from_fn(k + 1, k + 1, |i, j| match (i == k, j == k) {
        (false, false) => toeplitz_entry(u, i, j),
        (false, true) => x[i],
        (true, false) => x[j].conj(),
        (true, true) => Complex64::new(t, 0.0),
    })
}

fn frob_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Solves the completion problem with ADMM.
pub fn recover_anm(problem: &AnmProblem, cfg: &AnmConfig) -> Result<AnmSolution> {
    if !(cfg.rho > 0.0) || cfg.max_iter == 0 || !(cfg.relaxation > 0.0 && cfg.relaxation < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "ADMM needs rho > 0, max_iter > 0 and relaxation in (0, 2) (rho {}, max_iter {}, relaxation {})",
            cfg.rho, cfg.max_iter, cfg.relaxation
        )));
    }
    let k = problem.num_tones;
    let observed = &problem.observed;
    if observed.iter().all(Option::is_some) {
        let x: Vec<Complex64> = observed.iter().map(|v| v.unwrap()).collect();
        return Ok(AnmSolution {
            u: vec![Complex64::default(); k],
            h_sq_full: x,
            t: 0.0,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
            history: Vec::new(),
        });
    }

    // Work at unit scale so the tolerances and rho mean the same thing for any input level.
    let scale = observed
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let obs: Vec<Option<Complex64>> = observed.iter().map(|v| v.map(|z| z / scale)).collect();

    let n = k + 1;
    let mut rho = cfg.rho;
    let mut u = vec![Complex64::default(); k];
    let mut x: Vec<Complex64> = obs.iter().map(|v| v.unwrap_or_default()).collect();
    let mut t = 0.0;
    let mut z = CMatrix::zeros(n, n);
    let mut lambda = CMatrix::zeros(n, n);
    // Consecutive Z-step targets are close, so each eigensolve starts from the last basis.
    let mut basis: Option<CMatrix> = None;
    let mut history = Vec::with_capacity(cfg.max_iter);
    let mut converged = false;
    let mut iterations = 0;
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);

    for iter in 0..cfg.max_iter {
        iterations = iter + 1;
        // Θ step against M = Z − Λ/ρ.
        let m = CMatrix::from_fn(n, n, |i, j| z[(i, j)] - lambda[(i, j)] / rho);
        t = m[(k, k)].re - 1.0 / (2.0 * rho);
        for (i, xi) in x.iter_mut().enumerate() {
            if obs[i].is_none() {
                *xi = (m[(i, k)] + m[(k, i)].conj()) * 0.5;
            }
        }
        let diag_mean = (0..k).map(|i| m[(i, i)].re).sum::<f64>() / k as f64;
        u[0] = Complex64::new(diag_mean - 1.0 / (2.0 * rho * k as f64), 0.0);
        for lag in 1..k {
            let mut acc = Complex64::default();
            for i in 0..(k - lag) {
                acc += m[(i, i + lag)] + m[(i + lag, i)].conj();
            }
            u[lag] = acc / (2.0 * (k - lag) as f64);
        }
        let theta = block(&u, &x, t);
        let alpha = cfg.relaxation;
        let relaxed = CMatrix::from_fn(n, n, |i, j| theta[(i, j)] * alpha + z[(i, j)] * (1.0 - alpha));

        // Z step.
        let target = CMatrix::from_fn(n, n, |i, j| relaxed[(i, j)] + lambda[(i, j)] / rho).hermitian_part();
        let z_prev = z;
        let eig = match &basis {
            Some(b) => eig_hermitian_warm_tol(&target, b, PROJECTION_TOL)?,
            None => eig_hermitian(&target)?,
        };
        z = psd_from_eigen(&eig);
        basis = Some(eig.vectors);

        // Dual step.
        for i in 0..n {
            for j in 0..n {
                lambda[(i, j)] += (relaxed[(i, j)] - z[(i, j)]) * rho;
            }
        }

        r_norm = frob_diff(&theta, &z);
        s_norm = rho * frob_diff(&z, &z_prev);
        history.push((r_norm, s_norm));
        let eps_pri = n as f64 * cfg.eps_abs + cfg.eps_rel * theta.frobenius_norm().max(z.frobenius_norm());
        let eps_dual = n as f64 * cfg.eps_abs + cfg.eps_rel * lambda.frobenius_norm();
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        if !cfg.adaptive_rho {
            continue;
        }
        if r_norm > 10.0 * s_norm {
            rho *= 2.0;
        } else if s_norm > 10.0 * r_norm {
            rho /= 2.0;
        }
    }

    // Θ can sit slightly outside the cone; lifting the diagonal keeps the
    // Toeplitz structure and the observations while restoring feasibility.
    let min_eig = eig_hermitian(&block(&u, &x, t))?
        .values
        .last()
        .copied()
        .unwrap_or(0.0);
    if min_eig < 0.0 {
        u[0] += Complex64::new(-min_eig, 0.0);
        t -= min_eig;
    }

    for (i, xi) in x.iter_mut().enumerate() {
        *xi = match observed[i] {
            Some(v) => v,
            None => *xi * scale,
        };
    }
    for ui in u.iter_mut() {
        *ui *= scale;
    }
    Ok(AnmSolution {
        h_sq_full: x,
        u,
        t: t * scale,
        iterations,
        primal_residual: r_norm * scale,
        dual_residual: s_norm * scale,
        converged,
        history,
    })
}

/// Completes an incomplete two-way response.
pub fn complete_response(resp: &TwoWayResponse, cfg: &AnmConfig) -> Result<(TwoWayResponse, AnmSolution)> {
    let sol = recover_anm(&AnmProblem::from_response(resp)?, cfg)?;
    let full = TwoWayResponse::complete(resp.grid, sol.h_sq_full.clone())?;
    Ok((full, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ChannelRealization, ToneGrid};

    fn grid(k: usize) -> ToneGrid {
        ToneGrid {
            num_tones: k,
            ..ToneGrid::ble()
        }
    }

    fn two_path_sq(k: usize) -> Vec<Complex64> {
        let ch = ChannelRealization::new(
            vec![Complex64::new(1.0, 0.0), Complex64::from_polar(0.6, 1.1)],
            vec![20e-9, 120e-9],
        )
        .unwrap();
        ch.frequency_response(&grid(k)).iter().map(|h| h * h).collect()
    }

    fn with_gap(full: &[Complex64], gap: std::ops::Range<usize>) -> AnmProblem {
        AnmProblem::new(
            full.iter()
                .enumerate()
                .map(|(i, &v)| (!gap.contains(&i)).then_some(v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn all_observed_is_identity() {
        let full = two_path_sq(16);
        let p = AnmProblem::new(full.iter().map(|&v| Some(v)).collect()).unwrap();
        let sol = recover_anm(&p, &AnmConfig::default()).unwrap();
        assert_eq!(sol.h_sq_full, full);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn empty_problem_rejected() {
        assert_eq!(AnmProblem::new(vec![None; 4]), Err(Error::NoData));
    }

    #[test]
    fn interior_gap_recovered() {
        let full = two_path_sq(40);
        let sol = recover_anm(&with_gap(&full, 18..21), &AnmConfig::default()).unwrap();
        assert!(sol.iterations <= 100);
        for i in 18..21 {
            let rel = (sol.h_sq_full[i] - full[i]).norm() / full[i].norm();
            assert!(rel < 1e-3, "tone {i}: rel err {rel:.2e}");
        }
    }

    #[test]
    fn observations_kept_exactly_and_block_is_psd() {
        let full = two_path_sq(24);
        let sol = recover_anm(&with_gap(&full, 5..9), &AnmConfig::default()).unwrap();
        for i in (0..24).filter(|i| !(5..9).contains(i)) {
            assert_eq!(sol.h_sq_full[i], full[i]);
        }
        let min = *eig_hermitian(&sol.block_matrix()).unwrap().values.last().unwrap();
        assert!(min >= -1e-8, "min eigenvalue {min:e}");
    }

    #[test]
    fn scale_equivariant() {
        let full = two_path_sq(24);
        let alpha = Complex64::from_polar(250.0, 0.4);
        let scaled: Vec<Complex64> = full.iter().map(|v| v * alpha).collect();
        let a = recover_anm(&with_gap(&full, 10..12), &AnmConfig::default()).unwrap();
        let b = recover_anm(&with_gap(&scaled, 10..12), &AnmConfig::default()).unwrap();
        for i in 10..12 {
            assert!((a.h_sq_full[i] * alpha - b.h_sq_full[i]).norm() < 1e-6 * b.h_sq_full[i].norm());
        }
    }

    #[test]
    fn residuals_shrink_over_trailing_windows() {
        let full = two_path_sq(32);
        let cfg = AnmConfig {
            eps_abs: 1e-12,
            eps_rel: 1e-12,
            ..AnmConfig::default()
        };
        let sol = recover_anm(&with_gap(&full, 12..16), &cfg).unwrap();
        let norms: Vec<f64> = sol.history.iter().map(|(r, s)| r.hypot(*s)).collect();
        let window = 20;
        for w in norms.chunks(window).collect::<Vec<_>>().windows(2) {
            let prev = w[0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let next = w[1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(next <= prev * 1.0001, "window max rose from {prev:e} to {next:e}");
        }
    }

    #[test]
    fn rejects_bad_rho() {
        let full = two_path_sq(8);
        let cfg = AnmConfig {
            rho: 0.0,
            ..AnmConfig::default()
        };
        assert!(recover_anm(&with_gap(&full, 2..3), &cfg).is_err());
    }
}
