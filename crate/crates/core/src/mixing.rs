//! Mixing matrices `A` (`(N-1) x N`, `A 1 = 0`, rank `N-1`) that tie the
//! duplicated copies of the variable together.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `|row sum| / ||row||` accepted.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Smallest accepted `sigma_min / sigma_max`.
pub const RANK_RATIO_TOL: f64 = 1e-8;
/// Largest accepted deviation of `inv(A_without_n) a_n` from `-1`.
pub const IDENTITY_TOL: f64 = 1e-8;
pub const MAX_CONSTRUCTION_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    /// Sylvester Hadamard matrix without its all-ones row.
    TrimmedHadamard,
    /// Gaussian random matrix with each row's mean subtracted.
    RandomProjected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    a: DMatrix<f64>,
    kind: MatrixKind,
}

impl MixingMatrix {
    /// Wraps an arbitrary matrix without checking it; see
    /// [`validate_mixing_matrix`].
    pub fn from_matrix(a: DMatrix<f64>, kind: MatrixKind) -> Self {
        Self { a, kind }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Number of measurements `M`.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of copies `N`.
    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// Same matrix with columns reordered: column `j` of the result is
    /// column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let a = DMatrix::from_fn(self.rows(), self.cols(), |i, j| self.a[(i, perm[j])]);
        Self { a, kind: self.kind }
    }
}

fn sylvester_hadamard(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                let v = h[(i, j)];
                next[(i, j)] = v;
                next[(i, j + k)] = v;
                next[(i + k, j)] = v;
                next[(i + k, j + k)] = -v;
            }
        }
        h = next;
    }
    h
}

pub fn build_mixing_matrix(n: usize, kind: MatrixKind, seed: u64) -> Result<MixingMatrix> {
    if n < 2 {
        return Err(Error::UnsupportedSize {
            n,
            reason: "need at least two copies",
        });
    }
    match kind {
        MatrixKind::TrimmedHadamard => {
            if !n.is_power_of_two() {
                return Err(Error::UnsupportedSize {
                    n,
                    reason: "Sylvester construction needs a power of two",
                });
            }
            let h = sylvester_hadamard(n);
            Ok(MixingMatrix {
                a: h.rows(1, n - 1).into_owned(),
                kind,
            })
        }
        MatrixKind::RandomProjected => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..MAX_CONSTRUCTION_RETRIES {
                let b = DMatrix::<f64>::from_fn(n - 1, n, |_, _| StandardNormal.sample(&mut rng));
                let mut a = b;
                for mut row in a.row_iter_mut() {
                    let mean = row.sum() / n as f64;
                    row.add_scalar_mut(-mean);
                }
                let candidate = MixingMatrix { a, kind };
                if validate_mixing_matrix(&candidate).rank_ok() {
                    return Ok(candidate);
                }
            }
            Err(Error::ConstructionFailed {
                retries: MAX_CONSTRUCTION_RETRIES,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// `max_m |sum_n a_mn| / ||a_m||`.
    pub max_row_sum: f64,
    /// `sigma_min / sigma_max`; zero for rank-deficient matrices.
    pub singular_ratio: f64,
    /// `max_n max_j |[inv(A_without_n) a_n]_j + 1|`; infinite when some
    /// reduced matrix is singular.
    pub max_identity_deviation: f64,
    pub shape_ok: bool,
}

impl ValidationReport {
    pub fn row_sums_ok(&self) -> bool {
        self.max_row_sum <= ROW_SUM_TOL
    }

    pub fn rank_ok(&self) -> bool {
        self.shape_ok && self.singular_ratio > RANK_RATIO_TOL
    }

    pub fn identity_ok(&self) -> bool {
        self.max_identity_deviation <= IDENTITY_TOL
    }

    pub fn passes(&self) -> bool {
        self.row_sums_ok() && self.rank_ok() && self.identity_ok()
    }
}

pub fn validate_mixing_matrix(m: &MixingMatrix) -> ValidationReport {
    let a = &m.a;
    let (rows, cols) = a.shape();
    let shape_ok = cols >= 2 && rows + 1 == cols;

    let max_row_sum = a
        .row_iter()
        .map(|r| {
            let norm = r.norm();
            if norm == 0.0 {
                0.0
            } else {
                r.sum().abs() / norm
            }
        })
        .fold(0.0, f64::max);

    let singular_ratio = if rows == 0 {
        0.0
    } else {
        let sv = a.clone().svd(false, false).singular_values;
        let max = sv.max();
        let min = sv.min();
        if max > 0.0 {
            min / max
        } else {
            0.0
        }
    };

    let max_identity_deviation = if !shape_ok {
        f64::INFINITY
    } else {
        (0..cols)
            .map(|n| {
                let reduced = a.clone().remove_column(n);
                let col = a.column(n).into_owned();
                match reduced.lu().solve(&col) {
                    Some(x) if x.iter().all(|v| v.is_finite()) => {
                        x.iter().map(|v| (v + 1.0).abs()).fold(0.0, f64::max)
                    }
                    _ => f64::INFINITY,
                }
            })
            .fold(0.0, f64::max)
    };

    ValidationReport {
        max_row_sum,
        singular_ratio,
        max_identity_deviation,
        shape_ok,
    }
}
