//! Randomized benchmark: draw mixture-factor instances, run every solver,
//! score each against the brute-force product, and build empirical CDFs
//! of the normalized squared errors.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acep::run_acep;
use crate::clipping::run_clipping_ep;
use crate::ep::{EpMode, SolverConfig};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, Status};
use crate::gaussian::{Gmm1D, PosteriorMoments};
use crate::mixing::{build_mixing_matrix, MatrixKind};
use crate::oracle::{exact_product_moments_capped, DEFAULT_COMPONENT_CAP};
use crate::persistent::run_persistent_ep;
use crate::vdbp::{run_vdbp, VdbpConfig};

/// Below this `|exact mean|` the mean NSE is flagged as unstable.
pub const NEAR_ZERO_MEAN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RealLaw {
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl RealLaw {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            RealLaw::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            RealLaw::Fixed { value } => value,
        }
    }

    fn support_positive(&self) -> bool {
        match *self {
            RealLaw::Uniform { lo, hi } => lo > 0.0 && hi >= lo && hi.is_finite(),
            RealLaw::Fixed { value } => value > 0.0 && value.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    /// Uniform on the probability simplex (flat Dirichlet).
    UniformSimplex,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n_factors: usize,
    pub components: usize,
    pub seed: u64,
    pub weight_law: WeightLaw,
    pub mean_law: RealLaw,
    pub var_law: RealLaw,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            n_factors: 8,
            components: 2,
            seed: 0,
            weight_law: WeightLaw::UniformSimplex,
            mean_law: RealLaw::Uniform { lo: -3.0, hi: 3.0 },
            var_law: RealLaw::Uniform { lo: 0.1, hi: 2.0 },
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_factors < 2 {
            return Err(Error::InvalidConfig("n_factors must be at least 2".into()));
        }
        if self.components < 1 {
            return Err(Error::InvalidConfig("components must be at least 1".into()));
        }
        if !self.var_law.support_positive() {
            return Err(Error::InvalidConfig(
                "variance law must have positive support".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<Vec<Gmm1D>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.components;
    (0..spec.n_factors)
        .map(|_| {
            let weights = match spec.weight_law {
                WeightLaw::Equal => vec![1.0 / k as f64; k],
                WeightLaw::UniformSimplex => {
                    let raw: Vec<f64> = (0..k)
                        .map(|_| {
                            let e: f64 = Exp1.sample(&mut rng);
                            e.max(f64::MIN_POSITIVE)
                        })
                        .collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|e| e / total).collect()
                }
            };
            let means = (0..k).map(|_| spec.mean_law.sample(&mut rng)).collect();
            let vars = (0..k).map(|_| spec.var_law.sample(&mut rng)).collect();
            Gmm1D::new(weights, means, vars)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Vdbp,
    PepStrict,
    PepRelaxed,
    AcepStrict,
    AcepRelaxed,
    Clip,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Vdbp,
        Algorithm::PepStrict,
        Algorithm::PepRelaxed,
        Algorithm::AcepStrict,
        Algorithm::AcepRelaxed,
        Algorithm::Clip,
    ];

    /// Solver family name as used in the CSV `algorithm` column.
    pub fn family(self) -> &'static str {
        match self {
            Algorithm::Vdbp => "vdbp",
            Algorithm::PepStrict | Algorithm::PepRelaxed => "pep",
            Algorithm::AcepStrict | Algorithm::AcepRelaxed => "acep",
            Algorithm::Clip => "clip",
        }
    }

    pub fn mode(self) -> Option<EpMode> {
        match self {
            Algorithm::PepStrict | Algorithm::AcepStrict => Some(EpMode::Strict),
            Algorithm::PepRelaxed | Algorithm::AcepRelaxed => Some(EpMode::Relaxed),
            Algorithm::Vdbp | Algorithm::Clip => None,
        }
    }

    /// Curve label, e.g. `pep-strict`.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Vdbp => "vdbp",
            Algorithm::PepStrict => "pep-strict",
            Algorithm::PepRelaxed => "pep-relaxed",
            Algorithm::AcepStrict => "acep-strict",
            Algorithm::AcepRelaxed => "acep-relaxed",
            Algorithm::Clip => "clip",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub ep: SolverConfig,
    pub vdbp: VdbpConfig,
    pub matrix_kind: MatrixKind,
    pub matrix_seed: u64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            ep: SolverConfig::default(),
            vdbp: VdbpConfig::default(),
            matrix_kind: MatrixKind::TrimmedHadamard,
            matrix_seed: 0,
        }
    }
}

/// Runs one solver variant on one instance.
pub fn run_algorithm(alg: Algorithm, factors: &[Gmm1D], cfg: &AlgoConfig) -> Result<Estimate> {
    match alg {
        Algorithm::Vdbp => {
            let a = build_mixing_matrix(factors.len(), cfg.matrix_kind, cfg.matrix_seed)?;
            run_vdbp(factors, &a, &cfg.vdbp)
        }
        Algorithm::PepStrict | Algorithm::PepRelaxed => {
            let ep = SolverConfig {
                mode: alg.mode().expect("pep has a mode"),
                ..cfg.ep
            };
            run_persistent_ep(factors, &ep).map(|(e, _)| e)
        }
        Algorithm::AcepStrict | Algorithm::AcepRelaxed => {
            let ep = SolverConfig {
                mode: alg.mode().expect("acep has a mode"),
                ..cfg.ep
            };
            run_acep(factors, &ep).map(|(e, _)| e)
        }
        Algorithm::Clip => run_clipping_ep(factors, &cfg.ep),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nse {
    pub nse_mu: f64,
    pub nse_tau: f64,
    /// Raw `(mean - exact_mean)^2`, meaningful when `mu_unstable`.
    pub sq_err_mu: f64,
    pub mu_unstable: bool,
}

/// Squared errors normalized by the squared exact values.
pub fn nse(est: &Estimate, exact: &PosteriorMoments) -> Nse {
    let d_mu = est.mean - exact.mean;
    let d_tau = est.variance - exact.variance;
    Nse {
        nse_mu: d_mu * d_mu / (exact.mean * exact.mean),
        nse_tau: d_tau * d_tau / (exact.variance * exact.variance),
        sq_err_mu: d_mu * d_mu,
        mu_unstable: exact.mean.abs() < NEAR_ZERO_MEAN,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoResult {
    pub algorithm: Algorithm,
    pub mean: f64,
    pub var: f64,
    pub nse: Nse,
    pub iterations: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub seed: u64,
    pub exact_mean: f64,
    pub exact_var: f64,
    pub results: Vec<AlgoResult>,
}

/// Generates, solves and scores a single realization. Failures are
/// recorded in the result statuses, never returned.
pub fn run_realization(
    spec: &InstanceSpec,
    algorithms: &[Algorithm],
    cfg: &AlgoConfig,
) -> BenchRecord {
    let failed_all = |reason: String| BenchRecord {
        seed: spec.seed,
        exact_mean: f64::NAN,
        exact_var: f64::NAN,
        results: algorithms
            .iter()
            .map(|&algorithm| AlgoResult {
                algorithm,
                mean: f64::NAN,
                var: f64::NAN,
                nse: Nse {
                    nse_mu: f64::NAN,
                    nse_tau: f64::NAN,
                    sq_err_mu: f64::NAN,
                    mu_unstable: false,
                },
                iterations: 0,
                status: Status::Failed(reason.clone()),
            })
            .collect(),
    };
    let factors = match generate_instance(spec) {
        Ok(f) => f,
        Err(e) => return failed_all(format!("instance: {e}")),
    };
    let exact = match exact_product_moments_capped(&factors, DEFAULT_COMPONENT_CAP) {
        Ok(m) => m,
        Err(e) => return failed_all(format!("oracle: {e}")),
    };
    let results = algorithms
        .iter()
        .map(|&algorithm| {
            let est = run_algorithm(algorithm, &factors, cfg)
                .unwrap_or_else(|e| Estimate::failed(0, e.to_string()));
            AlgoResult {
                algorithm,
                mean: est.mean,
                var: est.variance,
                nse: nse(&est, &exact),
                iterations: est.iterations,
                status: est.status,
            }
        })
        .collect();
    BenchRecord {
        seed: spec.seed,
        exact_mean: exact.mean,
        exact_var: exact.variance,
        results,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NseMu,
    NseTau,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::NseMu => "nse_mu",
            Metric::NseTau => "nse_tau",
        }
    }
}

/// Empirical CDF: sorted values with `cdf_i = (i + 1) / count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub points: Vec<(f64, f64)>,
}

impl Cdf {
    pub fn from_values(algorithm: Algorithm, metric: Metric, values: &[f64]) -> Self {
        let mut v: Vec<f64> = values
            .iter()
            .map(|x| if x.is_nan() { f64::INFINITY } else { *x })
            .collect();
        v.sort_by(f64::total_cmp);
        let count = v.len() as f64;
        let points = v
            .into_iter()
            .enumerate()
            .map(|(i, x)| (x, (i + 1) as f64 / count))
            .collect();
        Self {
            algorithm,
            metric,
            points,
        }
    }

    /// `F(x)`: fraction of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|(v, _)| *v <= x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].1
        }
    }

    /// Nearest-rank quantile.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.points.len();
        if n == 0 {
            return f64::NAN;
        }
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.points[rank - 1].0
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}.cdf.txt", self.algorithm.label(), self.metric.name())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# {} {}\n# nse cdf\n",
            self.algorithm.label(),
            self.metric.name()
        );
        for (x, c) in &self.points {
            let _ = writeln!(out, "{} {}", fmt_f64(*x), fmt_f64(*c));
        }
        out
    }
}

/// `sup_x |F(x) - G(x)|` over the union of jump points.
pub fn cdf_sup_distance(a: &Cdf, b: &Cdf) -> f64 {
    a.points
        .iter()
        .chain(&b.points)
        .map(|(x, _)| (a.eval(*x) - b.eval(*x)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutput {
    pub records: Vec<BenchRecord>,
    pub cdfs: Vec<Cdf>,
}

impl SuiteOutput {
    pub fn cdf(&self, algorithm: Algorithm, metric: Metric) -> Option<&Cdf> {
        self.cdfs
            .iter()
            .find(|c| c.algorithm == algorithm && c.metric == metric)
    }
}

/// Runs `realizations` instances with seeds `template.seed + i`.
/// `workers == 0` uses rayon's default pool size. Output does not depend
/// on the worker count.
pub fn run_suite(
    template: &InstanceSpec,
    realizations: usize,
    algorithms: &[Algorithm],
    cfg: &AlgoConfig,
    workers: usize,
) -> Result<SuiteOutput> {
    if realizations == 0 {
        return Err(Error::InvalidConfig(
            "realizations must be at least 1".into(),
        ));
    }
    template.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let records: Vec<BenchRecord> = pool.install(|| {
        (0..realizations)
            .into_par_iter()
            .map(|i| {
                let spec = template.with_seed(template.seed.wrapping_add(i as u64));
                run_realization(&spec, algorithms, cfg)
            })
            .collect()
    });
    let mut cdfs = Vec::new();
    for (j, &alg) in algorithms.iter().enumerate() {
        for metric in [Metric::NseMu, Metric::NseTau] {
            let values: Vec<f64> = records
                .iter()
                .map(|r| {
                    let n = &r.results[j].nse;
                    match metric {
                        Metric::NseMu => n.nse_mu,
                        Metric::NseTau => n.nse_tau,
                    }
                })
                .collect();
            cdfs.push(Cdf::from_values(alg, metric, &values));
        }
    }
    Ok(SuiteOutput { records, cdfs })
}

pub const CSV_HEADER: [&str; 11] = [
    "seed",
    "algorithm",
    "mode",
    "mean",
    "var",
    "exact_mean",
    "exact_var",
    "nse_mu",
    "nse_tau",
    "iterations",
    "status",
];

/// Shortest round-trip representation in exponent form.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:e}")
    }
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        for res in &r.results {
            w.write_record([
                r.seed.to_string(),
                res.algorithm.family().to_string(),
                res.algorithm
                    .mode()
                    .map_or("none", EpMode::as_str)
                    .to_string(),
                fmt_f64(res.mean),
                fmt_f64(res.var),
                fmt_f64(r.exact_mean),
                fmt_f64(r.exact_var),
                fmt_f64(res.nse.nse_mu),
                fmt_f64(res.nse.nse_tau),
                res.iterations.to_string(),
                res.status.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
