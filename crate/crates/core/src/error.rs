use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A variance of exactly zero has no unnormalized-Gaussian representation.
    #[error("variance is exactly zero (essential discontinuity of the unnormalized Gaussian)")]
    EssentialDiscontinuity,

    #[error("precision is zero; no finite mean/variance form")]
    ZeroPrecision,

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    /// `min_s xi_s + cavity.xi <= 0` for the named component.
    #[error("factor-level belief is not integrable (component {component}, combined precision {combined_precision})")]
    NonIntegrableBelief {
        component: usize,
        combined_precision: f64,
    },

    #[error("expanded product has {components} components, above the cap of {cap}")]
    CapExceeded { components: u128, cap: u128 },

    #[error("product evidence underflowed to zero")]
    DegenerateProduct,

    #[error("every mixture component lies on the integrability boundary")]
    DegenerateBelief,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("unsupported size {n}: {reason}")]
    UnsupportedSize { n: usize, reason: &'static str },

    #[error("mixing-matrix construction failed after {retries} retries")]
    ConstructionFailed { retries: usize },

    #[error("initial variable belief is not integrable (precision {xi})")]
    BadInit { xi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
