//! Scalar Gaussian algebra in moment and natural-parameter form, Gaussian
//! mixtures, and the GMM-times-Gaussian posterior used by every solver.
//!
//! The natural form `(nu, xi)` is the working representation: it stays
//! finite when the precision crosses zero, whereas the moment form
//! `(mu, tau)` blows up there. Unnormalized Gaussians follow the convention
//!
//! ```text
//! UM(theta | nu, xi) = exp(-xi/2 theta^2 + nu theta - nu^2 / (2 xi))
//! ```
//!
//! with the constant term dropped when `xi == 0`, so `UM(theta | nu, 0)`
//! is the pure exponential `exp(nu theta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(weights) - 1` below which weights are accepted as-is.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Weights further than this from summing to one are rejected rather than
/// renormalized.
pub const WEIGHT_RENORMALIZE_TOL: f64 = 1e-6;

/// Gaussian in mean/variance form. The variance may be negative (a
/// non-integrable unnormalized Gaussian) or `+inf` (flat), but never zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoment {
    mu: f64,
    tau: f64,
}

impl GaussianMoment {
    pub fn new(mu: f64, tau: f64) -> Result<Self> {
        if tau == 0.0 {
            return Err(Error::EssentialDiscontinuity);
        }
        if mu.is_nan() || tau.is_nan() || !mu.is_finite() || tau == f64::NEG_INFINITY {
            return Err(Error::NumericalBreakdown(format!(
                "invalid moment parameters mu={mu}, tau={tau}"
            )));
        }
        Ok(Self { mu, tau })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// True when this is a normalizable density (`0 < tau < inf`).
    pub fn is_proper(&self) -> bool {
        self.tau > 0.0 && self.tau.is_finite()
    }

    pub fn to_nat(&self) -> GaussianNat {
        nat_from_moment(self)
    }
}

/// Gaussian in natural-parameter form: `nu = mu / tau`, `xi = 1 / tau`.
/// Any real pair is allowed, including `xi <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianNat {
    pub nu: f64,
    pub xi: f64,
}

impl GaussianNat {
    pub const FLAT: GaussianNat = GaussianNat { nu: 0.0, xi: 0.0 };

    pub const fn new(nu: f64, xi: f64) -> Self {
        Self { nu, xi }
    }

    pub fn to_moment(&self) -> Result<GaussianMoment> {
        moment_from_nat(self)
    }

    pub fn is_finite(&self) -> bool {
        self.nu.is_finite() && self.xi.is_finite()
    }

    /// `nu^2 / (2 xi)`, the constant carried by `UM`; zero at `xi == 0`.
    pub fn log_constant(&self) -> f64 {
        if self.xi == 0.0 {
            0.0
        } else {
            self.nu * self.nu / (2.0 * self.xi)
        }
    }
}

impl std::ops::Add for GaussianNat {
    type Output = GaussianNat;
    fn add(self, rhs: GaussianNat) -> GaussianNat {
        GaussianNat::new(self.nu + rhs.nu, self.xi + rhs.xi)
    }
}

impl std::ops::Sub for GaussianNat {
    type Output = GaussianNat;
    fn sub(self, rhs: GaussianNat) -> GaussianNat {
        GaussianNat::new(self.nu - rhs.nu, self.xi - rhs.xi)
    }
}

/// `(mu, tau) -> (mu / tau, 1 / tau)`. `tau = +inf` maps to the flat
/// message `(0, 0)`.
pub fn nat_from_moment(g: &GaussianMoment) -> GaussianNat {
    if g.tau.is_infinite() {
        return GaussianNat::FLAT;
    }
    GaussianNat::new(g.mu / g.tau, 1.0 / g.tau)
}

/// Convenience wrapper that validates the raw pair first.
pub fn nat_from_moment_parts(mu: f64, tau: f64) -> Result<GaussianNat> {
    GaussianMoment::new(mu, tau).map(|g| nat_from_moment(&g))
}

pub fn moment_from_nat(g: &GaussianNat) -> Result<GaussianMoment> {
    if g.xi == 0.0 {
        return Err(Error::ZeroPrecision);
    }
    GaussianMoment::new(g.nu / g.xi, 1.0 / g.xi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproductionStatus {
    Finite,
    /// `xi_a + xi_b == 0` with a nonzero linear term: the product is a pure
    /// exponential and has no Gaussian normalizer.
    NonIntegrableProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reproduction {
    pub log_scale: f64,
    pub product: GaussianNat,
    pub status: ReproductionStatus,
}

/// Unnormalized reproduction: `UM(a) * UM(b) = exp(log_scale) * UM(a + b)`.
///
/// For nonzero, non-cancelling precisions the scale is
/// `UM(0 | (xi_b nu_a - xi_a nu_b)/(xi_a + xi_b), xi_a xi_b/(xi_a + xi_b))`;
/// zero precisions are covered by continuity with the dropped constant.
pub fn reproduce_nat(a: GaussianNat, b: GaussianNat) -> Reproduction {
    let product = a + b;
    let xi_sum = product.xi;
    if xi_sum == 0.0 {
        let status = if product.nu == 0.0 {
            ReproductionStatus::Finite
        } else {
            ReproductionStatus::NonIntegrableProduct
        };
        return Reproduction {
            log_scale: -a.log_constant() - b.log_constant(),
            product,
            status,
        };
    }
    let log_scale = if a.xi != 0.0 && b.xi != 0.0 {
        let cross = b.xi * a.nu - a.xi * b.nu;
        -(cross * cross) / (2.0 * a.xi * b.xi * xi_sum)
    } else {
        product.log_constant() - a.log_constant() - b.log_constant()
    };
    Reproduction {
        log_scale,
        product,
        status: ReproductionStatus::Finite,
    }
}

/// One-dimensional Gaussian mixture with strictly positive, finite
/// component variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGmm", into = "RawGmm")]
pub struct Gmm1D {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    nat_means: Vec<f64>,
    nat_precisions: Vec<f64>,
}

/// Wire shape: `{"weights": [...], "means": [...], "variances": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGmm {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl TryFrom<RawGmm> for Gmm1D {
    type Error = Error;
    fn try_from(raw: RawGmm) -> Result<Self> {
        Gmm1D::new(raw.weights, raw.means, raw.variances)
    }
}

impl From<Gmm1D> for RawGmm {
    fn from(g: Gmm1D) -> Self {
        RawGmm {
            weights: g.weights,
            means: g.means,
            variances: g.variances,
        }
    }
}

impl Gmm1D {
    pub fn new(mut weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::InvalidMixture(format!(
                "length mismatch: {} weights, {} means, {} variances",
                k,
                means.len(),
                variances.len()
            )));
        }
        for (s, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidMixture(format!("weight {s} is {w}")));
            }
        }
        for (s, &m) in means.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::InvalidMixture(format!("mean {s} is {m}")));
            }
        }
        for (s, &v) in variances.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidMixture(format!("variance {s} is {v}")));
            }
        }
        let total: f64 = weights.iter().sum();
        let gap = (total - 1.0).abs();
        if gap > WEIGHT_RENORMALIZE_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        if gap > WEIGHT_SUM_TOL {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let nat_precisions: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let nat_means = means.iter().zip(&variances).map(|(m, v)| m / v).collect();
        Ok(Self {
            weights,
            means,
            variances,
            nat_means,
            nat_precisions,
        })
    }

    /// Single-component factor `N(mu, tau)`.
    pub fn single(mu: f64, tau: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mu], vec![tau])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn nat_means(&self) -> &[f64] {
        &self.nat_means
    }

    pub fn nat_precisions(&self) -> &[f64] {
        &self.nat_precisions
    }

    pub fn component(&self, s: usize) -> GaussianNat {
        GaussianNat::new(self.nat_means[s], self.nat_precisions[s])
    }

    /// `(index, xi)` of the component with the smallest precision.
    pub fn min_precision(&self) -> (usize, f64) {
        self.nat_precisions
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (s, xi)| {
                    if xi < best.1 {
                        (s, xi)
                    } else {
                        best
                    }
                },
            )
    }

    /// `(index, xi)` of the component with the largest precision.
    pub fn max_precision(&self) -> (usize, f64) {
        self.nat_precisions.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (s, xi)| {
                if xi > best.1 {
                    (s, xi)
                } else {
                    best
                }
            },
        )
    }

    /// Density of the (normalized) mixture at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| {
                w * (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
            })
            .sum()
    }
}

/// Mean, variance and log-normalizer of a (possibly unnormalized) density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub variance: f64,
    pub log_scale: f64,
}

/// Standard mixture moments by the law of total variance.
pub fn gmm_moments(f: &Gmm1D) -> (f64, f64) {
    let mean: f64 = f.weights.iter().zip(&f.means).map(|(w, m)| w * m).sum();
    let var = f
        .weights
        .iter()
        .zip(&f.means)
        .zip(&f.variances)
        .map(|((w, m), v)| w * (v + (m - mean) * (m - mean)))
        .sum();
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrabilityStatus {
    Integrable,
    /// Smallest combined precision is exactly zero.
    Boundary,
    NonIntegrable,
}

impl IntegrabilityStatus {
    pub fn is_integrable(self) -> bool {
        self == IntegrabilityStatus::Integrable
    }
}

/// Sign test on `min_s xi_s + cavity.xi`, which decides whether
/// `f(theta) * UM(theta | cavity)` has a finite integral.
pub fn check_integrability(f: &Gmm1D, cavity: GaussianNat) -> IntegrabilityStatus {
    let combined = f.min_precision().1 + cavity.xi;
    if combined > 0.0 {
        IntegrabilityStatus::Integrable
    } else if combined == 0.0 {
        IntegrabilityStatus::Boundary
    } else {
        IntegrabilityStatus::NonIntegrable
    }
}

/// Posterior of a mixture factor against an unnormalized Gaussian cavity.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPosterior {
    /// Normalized responsibilities over the factor's components.
    pub weights: Vec<f64>,
    /// Per-component posterior `(nu_s + nu_cav, xi_s + xi_cav)`.
    pub components: Vec<GaussianNat>,
    pub moments: PosteriorMoments,
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-weight of component `s` in `f * UM(cavity)`, with the cavity's own
/// constant `nu_c^2 / (2 xi_c)` removed. The expression
///
/// ```text
/// ln p_s + 1/2 ln(xi_s / (xi_s + xi_c))
///        + (nu_c^2 + 2 nu_s nu_c - xi_c nu_s mu_s) / (2 (xi_s + xi_c))
/// ```
///
/// is continuous through `xi_c = 0`. Requires `xi_s + xi_c > 0`.
pub(crate) fn shifted_log_weight(f: &Gmm1D, s: usize, cavity: GaussianNat) -> f64 {
    let xi_s = f.nat_precisions[s];
    let nu_s = f.nat_means[s];
    let mu_s = f.means[s];
    let xi = xi_s + cavity.xi;
    let quad = cavity.nu * cavity.nu + 2.0 * nu_s * cavity.nu - cavity.xi * nu_s * mu_s;
    f.weights[s].ln() + 0.5 * (xi_s / xi).ln() + quad / (2.0 * xi)
}

/// Mixture mean/variance of components given in natural form.
pub(crate) fn mixture_moments(weights: &[f64], components: &[GaussianNat]) -> (f64, f64) {
    let mean: f64 = weights
        .iter()
        .zip(components)
        .map(|(w, c)| w * c.nu / c.xi)
        .sum();
    let var = weights
        .iter()
        .zip(components)
        .map(|(w, c)| {
            let m = c.nu / c.xi;
            w * (1.0 / c.xi + (m - mean) * (m - mean))
        })
        .sum();
    (mean, var)
}

/// Exact posterior of `f(theta) * UM(theta | cavity)`.
///
/// Responsibilities come from a log-sum-exp over the per-component
/// evidences; `moments.log_scale` is the log of the full integral
/// `∫ f(theta) UM(theta | cavity) dtheta`.
pub fn gmm_times_gaussian(f: &Gmm1D, cavity: GaussianNat) -> Result<GmmPosterior> {
    let (s_min, xi_min) = f.min_precision();
    let combined = xi_min + cavity.xi;
    if !(combined > 0.0) {
        return Err(Error::NonIntegrableBelief {
            component: s_min,
            combined_precision: combined,
        });
    }
    if !cavity.is_finite() {
        return Err(Error::NumericalBreakdown(format!(
            "non-finite cavity ({}, {})",
            cavity.nu, cavity.xi
        )));
    }
    let log_w: Vec<f64> = (0..f.len())
        .map(|s| shifted_log_weight(f, s, cavity))
        .collect();
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::NumericalBreakdown(format!("log-evidence is {lse}")));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - lse).exp()).collect();
    let components: Vec<GaussianNat> = (0..f.len()).map(|s| f.component(s) + cavity).collect();
    let (mean, variance) = mixture_moments(&weights, &components);
    Ok(GmmPosterior {
        weights,
        components,
        moments: PosteriorMoments {
            mean,
            variance,
            log_scale: lse - cavity.log_constant(),
        },
    })
}
