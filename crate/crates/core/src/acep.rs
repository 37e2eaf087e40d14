//! Analytic-continuation EP.
//!
//! Messages live in natural parameters so their precision may pass through
//! zero. Each factor update is a moment-matching projection restricted to
//! message precisions at or above a threshold that keeps the *next*
//! factor's belief integrable. Components sitting exactly on the
//! integrability boundary carry zero relative weight in the limit and are
//! dropped, which is what lets the threshold itself be admissible.

use crate::ep::{belief_moved, cavity, check_init, damp, finish, EpMode, EpState, SolverConfig};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, Status};
use crate::gaussian::{
    check_integrability, mixture_moments, GaussianNat, Gmm1D, IntegrabilityStatus,
};

/// Relative width of the band around zero combined precision treated as
/// the integrability boundary. Absorbs rounding in the cavity subtraction.
pub const BOUNDARY_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AcepFactorUpdate {
    pub ref_component: usize,
    /// `log(omega_s' / omega_ref)`; `-inf` for boundary components.
    pub log_rho: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub mu_bf: f64,
    pub tau_bf: f64,
    pub xi_thres: f64,
    pub xi_out: f64,
    pub nu_out: f64,
    pub clipped_to_threshold: bool,
}

impl AcepFactorUpdate {
    pub fn message(&self) -> GaussianNat {
        GaussianNat::new(self.nu_out, self.xi_out)
    }
}

fn boundary_band(xi_s: f64, xi_c: f64) -> f64 {
    BOUNDARY_REL_TOL * (xi_s.abs() + xi_c.abs())
}

/// `log rho^{s'}_{s}` for a factor against cavity `(nu_c, xi_c)`, both
/// combined precisions strictly positive.
fn log_rho(f: &Gmm1D, s_prime: usize, s: usize, cav: GaussianNat) -> f64 {
    let p = f.weights();
    let nu = f.nat_means();
    let xi = f.nat_precisions();
    let (nu_c, xi_c) = (cav.nu, cav.xi);
    let d_sp = xi[s_prime] + xi_c;
    let d_s = xi[s] + xi_c;
    let log_prefactor =
        (p[s_prime] / p[s]).ln() + 0.5 * ((xi[s_prime] * d_s).ln() - (xi[s] * d_sp).ln());
    let bracket = xi_c * nu[s_prime] * nu[s_prime] / (xi[s_prime] * d_sp)
        - 2.0 * nu[s_prime] * nu_c / d_sp
        + 2.0 * nu[s] * nu_c / d_s
        - xi_c * nu[s] * nu[s] / (xi[s] * d_s)
        + nu_c * nu_c / d_s
        - nu_c * nu_c / d_sp;
    log_prefactor - 0.5 * bracket
}

/// Mixture moments of `f * UM(cavity)` through the weight-ratio route with
/// a chosen reference component. Returns `(log_rho, rho_bar, mean, var)`.
pub fn factor_belief_moments(
    f: &Gmm1D,
    cav: GaussianNat,
    ref_component: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let k = f.len();
    let mut on_boundary = vec![false; k];
    for s in 0..k {
        let xi_s = f.nat_precisions()[s];
        let combined = xi_s + cav.xi;
        let band = boundary_band(xi_s, cav.xi);
        if combined < -band {
            return Err(Error::NonIntegrableBelief {
                component: s,
                combined_precision: combined,
            });
        }
        on_boundary[s] = combined <= band;
    }
    if on_boundary[ref_component] {
        return Err(Error::DegenerateBelief);
    }
    let log_rho: Vec<f64> = (0..k)
        .map(|s| {
            if on_boundary[s] {
                f64::NEG_INFINITY
            } else if s == ref_component {
                0.0
            } else {
                log_rho(f, s, ref_component, cav)
            }
        })
        .collect();
    let max = log_rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericalBreakdown(format!(
            "log-ratio maximum {max}"
        )));
    }
    let unnorm: Vec<f64> = log_rho.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let rho_bar: Vec<f64> = unnorm.iter().map(|u| u / total).collect();

    let (weights, comps): (Vec<f64>, Vec<GaussianNat>) = (0..k)
        .filter(|&s| !on_boundary[s])
        .map(|s| (rho_bar[s], f.component(s) + cav))
        .unzip();
    let (mean, var) = mixture_moments(&weights, &comps);
    if !(mean.is_finite() && var.is_finite() && var > 0.0) {
        return Err(Error::NumericalBreakdown(format!(
            "factor-belief moments mean={mean}, variance={var}"
        )));
    }
    Ok((log_rho, rho_bar, mean, var))
}

/// Constrained projection for factor `n` given its cavity, the next factor
/// `k` and the next factor's current message.
pub fn update_factor_acep(
    f_n: &Gmm1D,
    cav: GaussianNat,
    f_next: &Gmm1D,
    msg_next: GaussianNat,
    mode: EpMode,
) -> Result<AcepFactorUpdate> {
    if !cav.is_finite() {
        return Err(Error::NumericalBreakdown(format!(
            "non-finite cavity ({}, {})",
            cav.nu, cav.xi
        )));
    }
    let ref_component = f_n.max_precision().0;
    let (log_rho, rho_bar, mu_bf, tau_bf) = factor_belief_moments(f_n, cav, ref_component)?;

    let xi_thres = match mode {
        EpMode::Strict => -f_next.min_precision().1 - cav.xi + msg_next.xi,
        EpMode::Relaxed => 0.0,
    };
    let unconstrained = 1.0 / tau_bf - cav.xi;
    let (xi_out, clipped_to_threshold) = if unconstrained > xi_thres {
        (unconstrained, false)
    } else {
        (xi_thres, true)
    };
    let nu_out = (xi_out + cav.xi) * mu_bf - cav.nu;
    Ok(AcepFactorUpdate {
        ref_component,
        log_rho,
        rho_bar,
        mu_bf,
        tau_bf,
        xi_thres,
        xi_out,
        nu_out,
        clipped_to_threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcepStep {
    pub sweep: usize,
    pub factor: usize,
    pub update: AcepFactorUpdate,
    /// Message actually installed (differs from the update under damping).
    pub installed: GaussianNat,
    /// Variable belief after this sub-iteration.
    pub belief: GaussianNat,
    /// Integrability of the next factor's belief against its new cavity.
    pub next_status: IntegrabilityStatus,
}

pub type AcepTrace = Vec<AcepStep>;

/// Raises message `n`'s precision by whole ulps until the floating-point
/// cavity at `k` satisfies the threshold it was computed for.
fn settle_on_threshold(
    state: &mut EpState,
    n: usize,
    k: usize,
    f_next: &Gmm1D,
    mu_bf: f64,
    cav: GaussianNat,
    resync: bool,
) {
    let floor = -f_next.min_precision().1;
    let mut nudge = 1.0;
    for _ in 0..64 {
        let next_cav = cavity(state, k);
        if next_cav.xi >= floor {
            return;
        }
        let mut msg = state.message(n);
        // Steps below the belief's ulp vanish in the incremental update.
        let scale = msg
            .xi
            .abs()
            .max(state.belief().xi.abs())
            .max(next_cav.xi.abs());
        let step = (floor - next_cav.xi)
            .max(nudge * scale * f64::EPSILON)
            .max(f64::MIN_POSITIVE);
        nudge *= 2.0;
        msg.xi += step;
        msg.nu = (msg.xi + cav.xi) * mu_bf - cav.nu;
        state.install(n, msg);
        if resync {
            state.resync();
        }
    }
}

pub fn run_acep(factors: &[Gmm1D], config: &SolverConfig) -> Result<(Estimate, AcepTrace)> {
    let n_factors = factors.len();
    check_init(n_factors, config, 2)?;
    let mut state = EpState::new(n_factors, GaussianNat::new(config.init_nu, config.init_xi));
    let mut trace = Vec::new();

    for sweep in 1..=config.max_sweeps {
        let before = state.belief();
        for n in 0..n_factors {
            let k = (n + 1) % n_factors;
            let cav = cavity(&state, n);
            let upd = match update_factor_acep(
                &factors[n],
                cav,
                &factors[k],
                state.message(k),
                config.mode,
            ) {
                Ok(u) => u,
                Err(e) => return Ok((Estimate::failed(sweep, format!("factor {n}: {e}")), trace)),
            };
            let mut msg = damp(state.message(n), upd.message(), config.damping);
            if msg.xi < upd.xi_thres {
                msg.xi = upd.xi_thres;
            }
            if config.damping != 1.0 {
                msg.nu = (msg.xi + cav.xi) * upd.mu_bf - cav.nu;
            }
            if !msg.is_finite() {
                return Ok((
                    Estimate::failed(sweep, format!("non-finite message at factor {n}")),
                    trace,
                ));
            }
            state.install(n, msg);
            let last = n + 1 == n_factors;
            if last {
                state.resync();
            }
            if config.mode == EpMode::Strict {
                settle_on_threshold(&mut state, n, k, &factors[k], upd.mu_bf, cav, last);
            }
            let next_status = check_integrability(&factors[k], cavity(&state, k));
            trace.push(AcepStep {
                sweep,
                factor: n,
                installed: state.message(n),
                update: upd,
                belief: state.belief(),
                next_status,
            });
        }
        if belief_moved(before, state.belief()) < config.tol {
            return Ok((finish(&state, sweep, Status::Converged), trace));
        }
    }
    Ok((finish(&state, config.max_sweeps, Status::MaxIter), trace))
}
