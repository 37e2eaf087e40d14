//! Clipping EP baseline: ordinary sequential EP whose messages are forced
//! to keep a positive precision.
//!
//! A message whose moment-matched precision comes out non-positive is
//! replaced by `(clip_xi * mu_bf, clip_xi)`: its variance is pushed toward
//! infinity while the projected mean is kept as a finite location.

use crate::ep::{belief_moved, check_init, damp, finish, EpState, SolverConfig};
use crate::error::Result;
use crate::estimate::{Estimate, Status};
use crate::gaussian::{check_integrability, gmm_times_gaussian, GaussianNat, Gmm1D};

/// Outcome of one clipping-EP factor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipUpdate {
    pub message: GaussianNat,
    /// The cavity had to be raised to the integrability floor first.
    pub cavity_projected: bool,
    /// The moment-matched precision was non-positive and got clipped.
    pub clipped: bool,
}

pub fn update_factor_clipping(f: &Gmm1D, cavity: GaussianNat, clip_xi: f64) -> Result<ClipUpdate> {
    let mut cav = cavity;
    let cavity_projected = !check_integrability(f, cav).is_integrable();
    if cavity_projected {
        cav.xi = -f.min_precision().1 + clip_xi;
    }
    let post = gmm_times_gaussian(f, cav)?;
    let mu_bf = post.moments.mean;
    let tau_bf = post.moments.variance;
    let xi = 1.0 / tau_bf - cav.xi;
    let nu = mu_bf / tau_bf - cav.nu;
    if xi > 0.0 {
        Ok(ClipUpdate {
            message: GaussianNat::new(nu, xi),
            cavity_projected,
            clipped: false,
        })
    } else {
        Ok(ClipUpdate {
            message: GaussianNat::new(clip_xi * mu_bf, clip_xi),
            cavity_projected,
            clipped: true,
        })
    }
}

pub fn run_clipping_ep(factors: &[Gmm1D], config: &SolverConfig) -> Result<Estimate> {
    let n = factors.len();
    check_init(n, config, 1)?;
    let mut state = EpState::new(n, GaussianNat::new(config.init_nu, config.init_xi));
    for sweep in 1..=config.max_sweeps {
        let before = state.belief();
        for (i, f) in factors.iter().enumerate() {
            let cav = crate::ep::cavity(&state, i);
            let upd = match update_factor_clipping(f, cav, config.clip_xi) {
                Ok(u) => u,
                Err(e) => return Ok(Estimate::failed(sweep, format!("factor {i}: {e}"))),
            };
            let mut msg = damp(state.message(i), upd.message, config.damping);
            if !(msg.xi > 0.0) {
                msg = upd.message;
            }
            if !msg.is_finite() {
                return Ok(Estimate::failed(
                    sweep,
                    format!("non-finite message at factor {i}"),
                ));
            }
            state.install(i, msg);
        }
        state.resync();
        if !state.belief().is_finite() {
            return Ok(Estimate::failed(sweep, "non-finite belief"));
        }
        if belief_moved(before, state.belief()) < config.tol {
            return Ok(finish(&state, sweep, Status::Converged));
        }
    }
    Ok(finish(&state, config.max_sweeps, Status::MaxIter))
}
