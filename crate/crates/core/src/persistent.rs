//! Persistent EP: sequential EP that leaves a factor's message untouched
//! whenever its factor-level belief would not be integrable.
//!
//! Skipping keeps the variable belief equal to its previous (integrable)
//! value, and an accepted update makes the belief equal to the projected
//! factor belief, whose precision is positive. Either way the variable
//! belief stays integrable.

use crate::ep::{belief_moved, cavity, check_init, damp, finish, EpMode, EpState, SolverConfig};
use crate::error::Result;
use crate::estimate::{Estimate, Status};
use crate::gaussian::{check_integrability, gmm_times_gaussian, GaussianNat, Gmm1D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PepStep {
    pub sweep: usize,
    pub factor: usize,
    pub passed: bool,
    /// Variable belief after this sub-iteration.
    pub belief: GaussianNat,
}

pub type PepTrace = Vec<PepStep>;

/// Whether factor `f` may be updated against `cav` under `mode`.
pub fn pep_check(f: &Gmm1D, cav: GaussianNat, mode: EpMode) -> bool {
    match mode {
        EpMode::Strict => check_integrability(f, cav).is_integrable(),
        EpMode::Relaxed => cav.xi > 0.0,
    }
}

pub fn run_persistent_ep(factors: &[Gmm1D], config: &SolverConfig) -> Result<(Estimate, PepTrace)> {
    let n = factors.len();
    check_init(n, config, 2)?;
    let mut state = EpState::new(n, GaussianNat::new(config.init_nu, config.init_xi));
    let mut trace = Vec::with_capacity(n * config.max_sweeps.min(64));

    for sweep in 1..=config.max_sweeps {
        let before = state.belief();
        for (i, f) in factors.iter().enumerate() {
            let cav = cavity(&state, i);
            let passed = pep_check(f, cav, config.mode);
            if passed {
                let post = match gmm_times_gaussian(f, cav) {
                    Ok(p) => p,
                    Err(e) => {
                        return Ok((Estimate::failed(sweep, format!("factor {i}: {e}")), trace))
                    }
                };
                let tau_bf = post.moments.variance;
                if !(tau_bf > 0.0) || !tau_bf.is_finite() {
                    return Ok((
                        Estimate::failed(
                            sweep,
                            format!("factor {i}: factor-belief variance {tau_bf}"),
                        ),
                        trace,
                    ));
                }
                let target =
                    GaussianNat::new(post.moments.mean / tau_bf - cav.nu, 1.0 / tau_bf - cav.xi);
                let msg = damp(state.message(i), target, config.damping);
                if !msg.is_finite() {
                    return Ok((
                        Estimate::failed(sweep, format!("non-finite message at factor {i}")),
                        trace,
                    ));
                }
                state.install(i, msg);
            }
            trace.push(PepStep {
                sweep,
                factor: i,
                passed,
                belief: state.belief(),
            });
        }
        state.resync();
        if belief_moved(before, state.belief()) < config.tol {
            return Ok((finish(&state, sweep, Status::Converged), trace));
        }
    }
    Ok((finish(&state, config.max_sweeps, Status::MaxIter), trace))
}
