//! Shared test helpers: an adaptive Gauss–Kronrod integrator used as an
//! independent oracle, plus instance generators.
#![allow(dead_code)]

use factored_inference::Gmm1D;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// G7-K15 on one interval: `(kronrod estimate, |kronrod - gauss|,
/// kronrod estimate of the integral of |f|)`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut k_abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let x = h * XGK[j];
        let (lo, hi) = (f(c - x), f(c + x));
        k += WGK[j] * (lo + hi);
        k_abs += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (lo + hi);
        }
    }
    (k * h, ((k - g) * h).abs(), k_abs * h.abs())
}

/// Globally adaptive G7-K15: bisects the worst interval until the summed
/// error estimate drops below `rel` times the integral of `|f|`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let mut parts = vec![{
        let (v, e, m) = gk15(&f, a, b);
        (a, b, v, e, m)
    }];
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let magnitude: f64 = parts.iter().map(|p| p.4).sum();
        if !total.is_finite() || err <= rel * magnitude || err < 1e-300 {
            return total;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, ..) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        for (l, h) in [(lo, mid), (mid, hi)] {
            let (v, e, m) = gk15(&f, l, h);
            parts.push((l, h, v, e, m));
        }
    }
    let err: f64 = parts.iter().map(|p| p.3).sum();
    let magnitude: f64 = parts.iter().map(|p| p.4).sum();
    panic!(
        "quadrature did not converge on [{a}, {b}]: err {err:e}, magnitude {magnitude:e}, parts {}",
        parts.len()
    );
}

/// Interval holding essentially all the mass of `prod f_n`.
fn support(factors: &[Gmm1D]) -> (f64, f64) {
    let lo = factors
        .iter()
        .flat_map(|f| {
            f.means()
                .iter()
                .zip(f.variances())
                .map(|(m, v)| m - 40.0 * v.sqrt())
        })
        .fold(f64::INFINITY, f64::min);
    let hi = factors
        .iter()
        .flat_map(|f| {
            f.means()
                .iter()
                .zip(f.variances())
                .map(|(m, v)| m + 40.0 * v.sqrt())
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `(Z, mean, variance)` of `prod f_n(x)` by quadrature.
pub fn quad_product_moments(factors: &[Gmm1D]) -> (f64, f64, f64) {
    let (lo, hi) = support(factors);
    let p = |x: f64| factors.iter().map(|f| f.pdf(x)).product::<f64>();
    quad_moments(p, lo, hi)
}

/// `(Z, mean, variance)` of an arbitrary nonnegative integrand on `[lo, hi]`.
pub fn quad_moments(p: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let rel = 1e-13;
    let z = integrate(&p, lo, hi, rel);
    let m1 = integrate(|x| x * p(x), lo, hi, rel) / z;
    let var = integrate(|x| (x - m1) * (x - m1) * p(x), lo, hi, rel) / z;
    (z, m1, var)
}

/// `ln f(x)` by log-sum-exp, finite far into the tails.
pub fn log_gmm_pdf(f: &Gmm1D, x: f64) -> f64 {
    let terms: Vec<f64> = (0..f.len())
        .map(|s| {
            let (m, v) = (f.means()[s], f.variances()[s]);
            f.weights()[s].ln()
                - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
                - (x - m) * (x - m) / (2.0 * v)
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub fn gaussian_pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Random mixture with means in `[-3, 3]` and variances in `[0.1, 2]`.
pub fn random_gmm(rng: &mut impl Rng, k: usize) -> Gmm1D {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Gmm1D::new(
        raw.iter().map(|w| w / total).collect(),
        (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        (0..k).map(|_| rng.gen_range(0.1..2.0)).collect(),
    )
    .unwrap()
}

pub fn random_instance(seed: u64, n: usize, k: usize) -> Vec<Gmm1D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_gmm(&mut rng, k)).collect()
}

/// Exact moments of a product of single Gaussians.
pub fn gaussian_product(factors: &[Gmm1D]) -> (f64, f64) {
    let (nu, xi) = factors.iter().fold((0.0, 0.0), |(nu, xi), f| {
        let v = f.variances()[0];
        (nu + f.means()[0] / v, xi + 1.0 / v)
    });
    (nu / xi, 1.0 / xi)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Relative error with a floor on the denominator for near-zero targets.
pub fn rel_err_floor(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}
