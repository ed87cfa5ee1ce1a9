//! Convergence predicates and bounds for approximate coefficient-domain MP:
//! the monotonicity conditions, the reset conditions that guarantee
//! exponential decay, a lower bound on `lambda_min`, and the iteration bound.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dict::{atom, MultiDict};
use crate::error::{MpError, Result};

/// Largest signal length for which the dense frame operator is formed.
pub const MAX_DENSE_LEN: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    pub delta: f64,
    pub eps_var: f64,
    pub lambda_lb: f64,
    pub eps_rel: f64,
}

impl ConvergenceParams {
    /// Checks `0 < delta < 1/2`, `0 < eps_var < 1 - 2 delta` and
    /// `2 delta / (1 - (2 delta + eps_var)) < sqrt(lambda_lb)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(MpError::Parameter(format!("delta {} outside (0, 1/2)", self.delta)));
        }
        if !(self.eps_var > 0.0 && self.eps_var < 1.0 - 2.0 * self.delta) {
            return Err(MpError::Parameter(format!(
                "eps_var {} outside (0, 1 - 2 delta)",
                self.eps_var
            )));
        }
        let lhs = 2.0 * self.delta / (1.0 - (2.0 * self.delta + self.eps_var));
        if !(lhs < self.lambda_lb.sqrt()) {
            return Err(MpError::Parameter(format!(
                "2 delta / (1 - (2 delta + eps_var)) = {lhs} is not below sqrt(lambda) = {}",
                self.lambda_lb.sqrt()
            )));
        }
        Ok(())
    }

    /// `1 - eps_var (1 + delta)^-2 lambda_lb`
    pub fn decay_factor(&self) -> f64 {
        1.0 - self.eps_var * self.lambda_lb / ((1.0 + self.delta) * (1.0 + self.delta))
    }
}

/// `A / P` with `A` the smallest eigenvalue of `sum_p d_p d_p^*` and `P` the
/// atom count; bounds `inf_x max_p |<x, d_p>|^2` from below.
pub fn lambda_min_lower_bound_atoms(atoms: &[Vec<Complex64>]) -> Result<f64> {
    let len = atoms.first().map(|a| a.len()).unwrap_or(0);
    if len == 0 || atoms.iter().any(|a| a.len() != len) {
        return Err(MpError::Dimension("atoms must share a positive length".into()));
    }
    if len > MAX_DENSE_LEN {
        return Err(MpError::SizeGuard(format!("frame operator of size {len} > {MAX_DENSE_LEN}")));
    }
    let mut s = DMatrix::<Complex64>::zeros(len, len);
    for a in atoms {
        for j in 0..len {
            let cj = a[j].conj();
            if cj == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..len {
                s[(i, j)] += a[i] * cj;
            }
        }
    }
    let eig = s.symmetric_eigen();
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let largest = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if smallest <= 1e-10 * largest.max(1.0) {
        return Err(MpError::NotSpanning(smallest));
    }
    Ok(smallest / atoms.len() as f64)
}

/// The bound for the full complex multi-dictionary (all `M` bins per frame).
pub fn lambda_min_lower_bound(multidict: &MultiDict) -> Result<f64> {
    let len = multidict.len();
    if len > MAX_DENSE_LEN {
        return Err(MpError::SizeGuard(format!("signal length {len} > {MAX_DENSE_LEN}")));
    }
    let mut atoms = Vec::with_capacity(multidict.total_atoms());
    for d in multidict.dicts() {
        for n in 0..d.frames(len) {
            for m in 0..d.m {
                atoms.push(atom(d, m, n, len)?);
            }
        }
    }
    lambda_min_lower_bound_atoms(&atoms)
}

/// Monotonicity conditions: `|c| >= (eps/delta) S` and
/// `|c| > 2 delta / (1 - 2 delta) |r|`.
pub fn check_thm1_conditions(top_abs: f64, running_sum: f64, true_norm: f64, delta: f64, eps: f64) -> (bool, bool) {
    let first = top_abs >= eps / delta * running_sum;
    let second = top_abs > 2.0 * delta / (1.0 - 2.0 * delta) * true_norm;
    (first, second)
}

/// Reset conditions guaranteeing exponential decay: a reset is due when
/// either holds. `k - k_out` counts selections since the last reset.
pub fn thm2_reset_conditions(
    top_abs: f64,
    running_sum: f64,
    since_reset: usize,
    reset_norm: f64,
    params: &ConvergenceParams,
) -> (bool, bool) {
    let first = top_abs < params.eps_rel / params.delta * running_sum;
    let q = params.decay_factor();
    let growth = q.powf(-(since_reset as f64) / 2.0);
    let second = top_abs
        < 2.0 * params.delta * growth / (1.0 - (2.0 * params.delta + params.eps_var)) * reset_norm;
    (first, second)
}

/// Smallest integer `k` with `k > log(E) / log(q)`.
pub fn crit3_iteration_bound(target: f64, decay: f64) -> Result<u64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(MpError::Parameter(format!("target {target} outside (0, 1)")));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(MpError::Parameter(format!("decay factor {decay} outside (0, 1)")));
    }
    Ok((target.ln() / decay.ln()).floor() as u64 + 1)
}

/// First step index `k` where `e[k+1] >= q e[k]`, if any.
pub fn check_exponential_decay(true_energies: &[f64], decay: f64) -> Option<usize> {
    true_energies.windows(2).position(|w| !(w[1] < decay * w[0]))
}

/// Per-step condition flags for diagnostics.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DiagnosticStep {
    pub k: usize,
    pub top_abs: f64,
    pub running_sum: f64,
    pub true_energy: f64,
    pub estimate: f64,
    pub monotone_first: bool,
    pub monotone_second: bool,
    pub true_decrease: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DiagnosticReport {
    pub delta: f64,
    pub eps_rel: f64,
    pub steps: Vec<DiagnosticStep>,
}
