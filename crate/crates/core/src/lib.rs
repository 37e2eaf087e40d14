//! Mean and variance of a univariate density given as a product of
//! Gaussian-mixture factors, approximated by message passing:
//!
//! * [`vdbp`]: variable duplication with Gaussian belief propagation,
//! * [`persistent`]: EP that skips updates with non-integrable factor beliefs,
//! * [`acep`]: EP in natural parameters with an integrability-preserving
//!   constrained projection,
//! * [`clipping`]: the precision-clipping EP baseline,
//!
//! plus the exact brute-force product in [`oracle`] and the randomized
//! benchmark in [`bench`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acep;
pub mod bench;
pub mod clipping;
pub mod ep;
pub mod error;
pub mod estimate;
pub mod gaussian;
pub mod mixing;
pub mod oracle;
pub mod persistent;
pub mod vdbp;

pub use error::{Error, Result};
pub use estimate::{Estimate, Status};
pub use gaussian::{GaussianMoment, GaussianNat, Gmm1D, IntegrabilityStatus, PosteriorMoments};
