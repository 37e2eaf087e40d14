use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Failed(String),
}

impl Status {
    pub fn is_converged(&self) -> bool {
        matches!(self, Status::Converged)
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, Status::Failed(_))
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Converged => f.write_str("converged"),
            Status::MaxIter => f.write_str("max_iter"),
            Status::Failed(reason) => write!(f, "failed: {reason}"),
        }
    }
}

/// Approximate mean and variance of the factored density.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub variance: f64,
    /// Per-copy belief means (variable-duplication solver only).
    pub per_copy_means: Vec<f64>,
    pub per_copy_variances: Vec<f64>,
    /// Full iterations (or sweeps) performed.
    pub iterations: usize,
    pub status: Status,
}

impl Estimate {
    pub(crate) fn failed(iterations: usize, reason: impl Into<String>) -> Self {
        Self {
            mean: f64::NAN,
            variance: f64::NAN,
            per_copy_means: Vec::new(),
            per_copy_variances: Vec::new(),
            iterations,
            status: Status::Failed(reason.into()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.variance.is_finite()
    }
}
