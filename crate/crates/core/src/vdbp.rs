//! Variable-duplication Gaussian BP.
//!
//! The scalar variable is copied once per factor and the copies are tied
//! by the noiseless measurement `A theta = 0` with `A 1 = 0`. Gaussian BP
//! then runs on the bipartite graph between the `M = N - 1` measurements
//! and the `N` copies, with each measurement's interference term
//! approximated as Gaussian. The only factor-dependent step is the GMM
//! posterior of each copy against its edge cavity.
//!
//! The cavity and extrinsic quantities are carried in natural form, so an
//! edge whose cavity is flat (`N = 2`, where removing the only measurement
//! leaves nothing) is simply precision zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Estimate, Status};
use crate::gaussian::{gmm_times_gaussian, GaussianNat, Gmm1D};
use crate::mixing::MixingMatrix;

/// Negative edge-cavity precisions smaller than this fraction of the
/// extrinsic precision are rounding noise and snap to zero.
const CAVITY_SNAP_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdbpConfig {
    /// Stop when `|d mean| + |d variance|` between iterations is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight on the new per-edge moments; 1.0 is undamped.
    pub damping: f64,
    /// Regularizing noise variance added to every measurement.
    pub epsilon: f64,
}

impl Default for VdbpConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            damping: 1.0,
            epsilon: 0.0,
        }
    }
}

impl VdbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Message state; `M x N` arrays are row-major with index `m * N + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VdbpState {
    pub rows: usize,
    pub cols: usize,
    /// Variable-to-measurement moments per edge.
    pub mu_theta: Vec<f64>,
    pub tau_theta: Vec<f64>,
    /// Full interference sums per measurement.
    pub mu_p: Vec<f64>,
    pub tau_p: Vec<f64>,
    /// Interference with the edge's own copy removed.
    pub mu_p_edge: Vec<f64>,
    pub tau_p_edge: Vec<f64>,
    /// Extrinsic belief of each copy from all measurements.
    pub mu_r: Vec<f64>,
    pub tau_r: Vec<f64>,
    /// Edge cavities (all measurements but one), in natural form.
    pub cavity_edge: Vec<GaussianNat>,
    pub epsilon: Vec<f64>,
}

impl VdbpState {
    fn new(rows: usize, cols: usize, epsilon: f64) -> Self {
        let edges = rows * cols;
        Self {
            rows,
            cols,
            mu_theta: vec![0.0; edges],
            tau_theta: vec![1.0; edges],
            mu_p: vec![0.0; rows],
            tau_p: vec![0.0; rows],
            mu_p_edge: vec![0.0; edges],
            tau_p_edge: vec![0.0; edges],
            mu_r: vec![0.0; cols],
            tau_r: vec![0.0; cols],
            cavity_edge: vec![GaussianNat::FLAT; edges],
            epsilon: vec![epsilon; rows],
        }
    }
}

struct Breakdown(String);

/// One full message-passing iteration. Returns the per-copy extrinsic
/// natural parameters used for the final beliefs.
fn iterate(
    state: &mut VdbpState,
    a: &[f64],
    factors: &[Gmm1D],
    damping: f64,
    iter: usize,
) -> std::result::Result<Vec<GaussianNat>, Breakdown> {
    let (rows, cols) = (state.rows, state.cols);

    for m in 0..rows {
        let row = &a[m * cols..(m + 1) * cols];
        let mut mu = 0.0;
        let mut tau = 0.0;
        for n in 0..cols {
            mu += row[n] * state.mu_theta[m * cols + n];
            tau += row[n] * row[n] * state.tau_theta[m * cols + n];
        }
        state.mu_p[m] = mu;
        state.tau_p[m] = tau;
        for n in 0..cols {
            let e = m * cols + n;
            state.mu_p_edge[e] = mu - row[n] * state.mu_theta[e];
            state.tau_p_edge[e] = tau - row[n] * row[n] * state.tau_theta[e];
        }
    }

    // Per-edge contribution of measurement m to copy n, in natural form.
    let mut contrib = vec![GaussianNat::FLAT; rows * cols];
    let mut extrinsic = vec![GaussianNat::FLAT; cols];
    for m in 0..rows {
        for n in 0..cols {
            let e = m * cols + n;
            let a_mn = a[e];
            if a_mn == 0.0 {
                continue;
            }
            let denom = state.tau_p_edge[e] + state.epsilon[m];
            if !(denom > 0.0) {
                return Err(Breakdown(format!(
                    "iteration {iter}, edge ({m}, {n}): interference variance {denom}"
                )));
            }
            let c = GaussianNat::new(
                a_mn * (0.0 - state.mu_p_edge[e]) / denom,
                a_mn * a_mn / denom,
            );
            contrib[e] = c;
            extrinsic[n] = extrinsic[n] + c;
        }
    }
    for n in 0..cols {
        let x = extrinsic[n];
        if !(x.xi > 0.0) || !x.is_finite() {
            return Err(Breakdown(format!(
                "iteration {iter}, copy {n}: extrinsic precision {}",
                x.xi
            )));
        }
        state.tau_r[n] = 1.0 / x.xi;
        state.mu_r[n] = x.nu / x.xi;
    }

    for m in 0..rows {
        for n in 0..cols {
            let e = m * cols + n;
            let mut cav = extrinsic[n] - contrib[e];
            if cav.xi < 0.0 && cav.xi >= -CAVITY_SNAP_REL * extrinsic[n].xi {
                cav.xi = 0.0;
            }
            if !(cav.xi >= 0.0) || !cav.is_finite() {
                return Err(Breakdown(format!(
                    "iteration {iter}, edge ({m}, {n}): cavity precision {}",
                    cav.xi
                )));
            }
            state.cavity_edge[e] = cav;
            let post = gmm_times_gaussian(&factors[n], cav)
                .map_err(|err| Breakdown(format!("iteration {iter}, edge ({m}, {n}): {err}")))?;
            let (mu, tau) = (post.moments.mean, post.moments.variance);
            if !(tau > 0.0) || !tau.is_finite() || !mu.is_finite() {
                return Err(Breakdown(format!(
                    "iteration {iter}, edge ({m}, {n}): edge variance {tau}"
                )));
            }
            if damping == 1.0 {
                state.mu_theta[e] = mu;
                state.tau_theta[e] = tau;
            } else {
                state.mu_theta[e] = damping * mu + (1.0 - damping) * state.mu_theta[e];
                state.tau_theta[e] = damping * tau + (1.0 - damping) * state.tau_theta[e];
            }
        }
    }
    Ok(extrinsic)
}

/// Per-copy beliefs `f_n * N(mu_r_n, tau_r_n)` and their combination:
/// precision-weighted mean, minimum variance.
fn combine(
    factors: &[Gmm1D],
    extrinsic: &[GaussianNat],
) -> std::result::Result<(f64, f64, Vec<f64>, Vec<f64>), Breakdown> {
    let mut means = Vec::with_capacity(factors.len());
    let mut vars = Vec::with_capacity(factors.len());
    for (n, (f, x)) in factors.iter().zip(extrinsic).enumerate() {
        let post = gmm_times_gaussian(f, *x).map_err(|e| Breakdown(format!("copy {n}: {e}")))?;
        means.push(post.moments.mean);
        vars.push(post.moments.variance);
    }
    let precision: f64 = vars.iter().map(|v| 1.0 / v).sum();
    let weighted: f64 = means.iter().zip(&vars).map(|(m, v)| m / v).sum();
    let mean = weighted / precision;
    let variance = vars.iter().copied().fold(f64::INFINITY, f64::min);
    if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
        return Err(Breakdown(format!(
            "non-finite estimate ({mean}, {variance})"
        )));
    }
    Ok((mean, variance, means, vars))
}

fn check_inputs(factors: &[Gmm1D], matrix: &MixingMatrix, config: &VdbpConfig) -> Result<()> {
    config.validate()?;
    let n = factors.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 factors, got {n}"
        )));
    }
    if matrix.cols() != n || matrix.rows() + 1 != n {
        return Err(Error::InvalidConfig(format!(
            "mixing matrix is {}x{}, expected {}x{n}",
            matrix.rows(),
            matrix.cols(),
            n - 1
        )));
    }
    Ok(())
}

pub fn run_vdbp(factors: &[Gmm1D], matrix: &MixingMatrix, config: &VdbpConfig) -> Result<Estimate> {
    run_vdbp_observed(factors, matrix, config, |_, _| {})
}

/// [`run_vdbp`] with a hook called after every iteration with the
/// iteration number and the message state.
pub fn run_vdbp_observed(
    factors: &[Gmm1D],
    matrix: &MixingMatrix,
    config: &VdbpConfig,
    mut observe: impl FnMut(usize, &VdbpState),
) -> Result<Estimate> {
    check_inputs(factors, matrix, config)?;
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let a: Vec<f64> = (0..rows)
        .flat_map(|m| (0..cols).map(move |n| (m, n)))
        .map(|(m, n)| matrix.matrix()[(m, n)])
        .collect();
    let mut state = VdbpState::new(rows, cols, config.epsilon);
    let mut previous: Option<(f64, f64)> = None;
    let mut last = None;

    for iter in 1..=config.max_iter {
        let extrinsic = match iterate(&mut state, &a, factors, config.damping, iter) {
            Ok(x) => x,
            Err(Breakdown(msg)) => return Ok(Estimate::failed(iter, msg)),
        };
        observe(iter, &state);
        let (mean, variance, means, vars) = match combine(factors, &extrinsic) {
            Ok(c) => c,
            Err(Breakdown(msg)) => return Ok(Estimate::failed(iter, msg)),
        };
        let converged = previous
            .map(|(pm, pv)| (mean - pm).abs() + (variance - pv).abs() < config.tol)
            .unwrap_or(false);
        previous = Some((mean, variance));
        let estimate = Estimate {
            mean,
            variance,
            per_copy_means: means,
            per_copy_variances: vars,
            iterations: iter,
            status: Status::Converged,
        };
        if converged {
            return Ok(estimate);
        }
        last = Some(estimate);
    }
    let mut estimate = last.expect("max_iter >= 1");
    estimate.status = Status::MaxIter;
    Ok(estimate)
}
