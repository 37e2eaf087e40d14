//! Sequential EP on a single scalar variable connected to `N` mixture
//! factors: message storage, the running variable belief, cavities, and
//! the solver configuration shared by the EP variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Estimate, Status};
use crate::gaussian::GaussianNat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpMode {
    Strict,
    Relaxed,
}

impl EpMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EpMode::Strict => "strict",
            EpMode::Relaxed => "relaxed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when neither belief parameter moves by more than this over a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub mode: EpMode,
    /// Weight on the new message; 1.0 is undamped.
    pub damping: f64,
    pub init_nu: f64,
    pub init_xi: f64,
    /// Precision given to clipped messages (clipping baseline only).
    pub clip_xi: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100,
            mode: EpMode::Strict,
            damping: 1.0,
            init_nu: 0.0,
            init_xi: 1.0,
            clip_xi: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mode: EpMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.clip_xi > 0.0 && self.clip_xi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "clip_xi must be positive, got {}",
                self.clip_xi
            )));
        }
        if !(self.init_nu.is_finite() && self.init_xi.is_finite()) {
            return Err(Error::InvalidConfig("non-finite initial message".into()));
        }
        Ok(())
    }
}

/// Factor-to-variable messages and their running product.
#[derive(Debug, Clone, PartialEq)]
pub struct EpState {
    msgs: Vec<GaussianNat>,
    belief: GaussianNat,
}

impl EpState {
    pub fn new(n: usize, init: GaussianNat) -> Self {
        let mut state = Self {
            msgs: vec![init; n],
            belief: GaussianNat::FLAT,
        };
        state.resync();
        state
    }

    pub fn from_messages(msgs: Vec<GaussianNat>) -> Self {
        let mut state = Self {
            msgs,
            belief: GaussianNat::FLAT,
        };
        state.resync();
        state
    }

    pub fn len(&self) -> usize {
        self.msgs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msgs.is_empty()
    }

    pub fn messages(&self) -> &[GaussianNat] {
        &self.msgs
    }

    pub fn message(&self, n: usize) -> GaussianNat {
        self.msgs[n]
    }

    pub fn belief(&self) -> GaussianNat {
        self.belief
    }

    /// Replaces message `n` and updates the belief by the difference.
    pub fn install(&mut self, n: usize, msg: GaussianNat) {
        let old = self.msgs[n];
        self.belief.nu += msg.nu - old.nu;
        self.belief.xi += msg.xi - old.xi;
        self.msgs[n] = msg;
    }

    /// Recomputes the belief from scratch to shed incremental drift.
    pub fn resync(&mut self) {
        self.belief = self.summed_belief();
    }

    pub fn summed_belief(&self) -> GaussianNat {
        self.msgs.iter().fold(GaussianNat::FLAT, |acc, m| acc + *m)
    }
}

/// Product of every message except the `n`-th.
pub fn cavity(state: &EpState, n: usize) -> GaussianNat {
    state.belief - state.msgs[n]
}

/// Mean and variance of the variable belief.
pub fn belief_estimate(belief: GaussianNat) -> Result<(f64, f64)> {
    if !(belief.xi > 0.0) || !belief.is_finite() {
        return Err(Error::NonIntegrableBelief {
            component: 0,
            combined_precision: belief.xi,
        });
    }
    Ok((belief.nu / belief.xi, 1.0 / belief.xi))
}

pub(crate) fn check_init(n: usize, config: &SolverConfig, min_factors: usize) -> Result<()> {
    config.validate()?;
    if n < min_factors {
        return Err(Error::InvalidConfig(format!(
            "need at least {min_factors} factors, got {n}"
        )));
    }
    let xi = config.init_xi * n as f64;
    if !(xi > 0.0) {
        return Err(Error::BadInit { xi });
    }
    Ok(())
}

pub(crate) fn damp(old: GaussianNat, new: GaussianNat, damping: f64) -> GaussianNat {
    if damping == 1.0 {
        return new;
    }
    GaussianNat::new(
        damping * new.nu + (1.0 - damping) * old.nu,
        damping * new.xi + (1.0 - damping) * old.xi,
    )
}

pub(crate) fn belief_moved(before: GaussianNat, after: GaussianNat) -> f64 {
    (after.nu - before.nu)
        .abs()
        .max((after.xi - before.xi).abs())
}

/// Final estimate from a state after the sweep loop.
pub(crate) fn finish(state: &EpState, sweeps: usize, status: Status) -> Estimate {
    match belief_estimate(state.belief()) {
        Ok((mean, variance)) => Estimate {
            mean,
            variance,
            per_copy_means: Vec::new(),
            per_copy_variances: Vec::new(),
            iterations: sweeps,
            status,
        },
        Err(e) => Estimate::failed(sweeps, e.to_string()),
    }
}
