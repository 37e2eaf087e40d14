//! Brute-force moments of a product of Gaussian mixtures.
//!
//! The product of `N` mixtures with `K_n` components is a mixture with
//! `prod K_n` components. Every component tuple is visited depth first,
//! building the tuple's Gaussian by pairwise reproduction along the path,
//! and folded into a log-weighted running mean/variance, so memory stays
//! `O(N)` however large the expansion.

use crate::error::{Error, Result};
use crate::gaussian::{reproduce_nat, GaussianNat, Gmm1D, PosteriorMoments};

pub const DEFAULT_COMPONENT_CAP: u128 = 1 << 24;

/// Number of components of the expanded product.
pub fn expanded_component_count(factors: &[Gmm1D]) -> u128 {
    factors
        .iter()
        .fold(1u128, |acc, f| acc.saturating_mul(f.len() as u128))
}

/// Exact mean, variance and log-evidence of `prod_n f_n` with the default cap.
pub fn exact_product_moments(factors: &[Gmm1D]) -> Result<PosteriorMoments> {
    exact_product_moments_capped(factors, DEFAULT_COMPONENT_CAP)
}

pub fn exact_product_moments_capped(factors: &[Gmm1D], cap: u128) -> Result<PosteriorMoments> {
    if factors.is_empty() {
        return Err(Error::InvalidMixture("empty factor list".into()));
    }
    let components = expanded_component_count(factors);
    if components > cap {
        return Err(Error::CapExceeded { components, cap });
    }
    let mut acc = LogWeightedMoments::default();
    let first = &factors[0];
    for s in 0..first.len() {
        expand(
            &factors[1..],
            first.weights()[s].ln(),
            first.component(s),
            &mut acc,
        );
    }
    acc.finish()
}

/// Log of the normalizer relating `M(a) M(b)` to `M(a + b)` for proper
/// normalized Gaussians, via the unnormalized reproduction identity.
fn log_normalized_overlap(a: GaussianNat, b: GaussianNat) -> (f64, GaussianNat) {
    let r = reproduce_nat(a, b);
    let log_norm = 0.5 * (a.xi * b.xi / (2.0 * std::f64::consts::PI * r.product.xi)).ln();
    (r.log_scale + log_norm, r.product)
}

fn expand(rest: &[Gmm1D], log_w: f64, nat: GaussianNat, acc: &mut LogWeightedMoments) {
    match rest.split_first() {
        None => acc.push(log_w, nat.nu / nat.xi, 1.0 / nat.xi),
        Some((f, tail)) => {
            for s in 0..f.len() {
                let (overlap, product) = log_normalized_overlap(nat, f.component(s));
                expand(tail, log_w + f.weights()[s].ln() + overlap, product, acc);
            }
        }
    }
}

/// Streaming weighted mean/variance with log-domain weights.
///
/// Holds the normalized running mean, the normalized spread of the means
/// and the normalized average component variance, so no quantity ever
/// carries the absolute weight scale.
#[derive(Debug, Clone)]
pub(crate) struct LogWeightedMoments {
    log_total: f64,
    mean: f64,
    spread: f64,
    within: f64,
}

impl Default for LogWeightedMoments {
    fn default() -> Self {
        Self {
            log_total: f64::NEG_INFINITY,
            mean: 0.0,
            spread: 0.0,
            within: 0.0,
        }
    }
}

impl LogWeightedMoments {
    pub(crate) fn push(&mut self, log_w: f64, mean: f64, variance: f64) {
        if log_w == f64::NEG_INFINITY {
            return;
        }
        let log_new = log_add_exp(self.log_total, log_w);
        let frac = (log_w - log_new).exp();
        let delta = mean - self.mean;
        self.mean += frac * delta;
        self.spread = (1.0 - frac) * (self.spread + frac * delta * delta);
        self.within = (1.0 - frac) * self.within + frac * variance;
        self.log_total = log_new;
    }

    pub(crate) fn finish(&self) -> Result<PosteriorMoments> {
        if self.log_total == f64::NEG_INFINITY || !self.log_total.is_finite() {
            return Err(Error::DegenerateProduct);
        }
        Ok(PosteriorMoments {
            mean: self.mean,
            variance: self.spread + self.within,
            log_scale: self.log_total,
        })
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
