mod common;

use approx::assert_relative_eq;
use factored_inference::gaussian::{
    check_integrability, gmm_moments, gmm_times_gaussian, moment_from_nat, nat_from_moment_parts,
    reproduce_nat, GaussianNat, Gmm1D, IntegrabilityStatus, ReproductionStatus,
};
use factored_inference::oracle::{exact_product_moments, exact_product_moments_capped};
use factored_inference::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    gaussian_pdf, integrate, log_gmm_pdf, quad_moments, quad_product_moments, random_instance,
};

fn log_um(theta: f64, g: GaussianNat) -> f64 {
    -0.5 * g.xi * theta * theta + g.nu * theta - g.log_constant()
}

fn um(theta: f64, g: GaussianNat) -> f64 {
    log_um(theta, g).exp()
}

/// `f(theta) * UM(theta | g)` without the `0 * inf` of the naive product.
fn tilted(f: &Gmm1D, g: GaussianNat) -> impl Fn(f64) -> f64 + '_ {
    move |t| (log_gmm_pdf(f, t) + log_um(t, g)).exp()
}

#[test]
fn reproduction_scale_matches_pointwise_product() {
    let cases = [
        (GaussianNat::new(1.0, 1.0), GaussianNat::new(-1.0, 1.0)),
        (GaussianNat::new(0.3, 2.5), GaussianNat::new(1.7, -0.9)),
        (GaussianNat::new(3.0, 0.0), GaussianNat::new(0.0, 1.0)),
        (GaussianNat::new(-0.4, 0.7), GaussianNat::new(2.0, 0.0)),
    ];
    for (a, b) in cases {
        let r = reproduce_nat(a, b);
        for theta in [-2.0, -0.3, 0.0, 0.8, 1.9] {
            let lhs = um(theta, a) * um(theta, b);
            let rhs = r.log_scale.exp() * um(theta, r.product);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }
}

#[test]
fn reproduction_scale_matches_quadrature() {
    // Integral of UM(a) UM(b) = exp(log_scale) * sqrt(2 pi / (xi_a + xi_b)).
    let a = GaussianNat::new(0.8, 1.3);
    let b = GaussianNat::new(-2.1, 0.6);
    let r = reproduce_nat(a, b);
    let z = integrate(|t| um(t, a) * um(t, b), -40.0, 40.0, 1e-13);
    let want = r.log_scale.exp() * (2.0 * std::f64::consts::PI / r.product.xi).sqrt();
    assert_relative_eq!(z, want, max_relative = 1e-10);
}

#[test]
fn gmm_times_gaussian_matches_quadrature() {
    let f = Gmm1D::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![0.5, 1.5]).unwrap();
    for cav in [
        GaussianNat::new(0.4, 0.8),
        GaussianNat::new(-0.7, 0.0),
        GaussianNat::new(0.2, -0.5),
    ] {
        let post = gmm_times_gaussian(&f, cav).unwrap();
        let (z, m, v) = quad_moments(tilted(&f, cav), -60.0, 60.0);
        assert_relative_eq!(post.moments.mean, m, max_relative = 1e-9);
        assert_relative_eq!(post.moments.variance, v, max_relative = 1e-9);
        // log_scale is the log-normalizer of f * UM(cavity).
        assert_relative_eq!(
            post.moments.log_scale,
            z.ln(),
            max_relative = 1e-9,
            epsilon = 1e-12
        );
    }
}

#[test]
fn gmm_moments_match_monte_carlo() {
    let f = Gmm1D::new(vec![0.25, 0.75], vec![-2.0, 1.0], vec![0.3, 0.8]).unwrap();
    let (mean, var) = gmm_moments(&f);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400_000;
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let s = if rng.gen::<f64>() < 0.25 { 0 } else { 1 };
            let z: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            f.means()[s] + f.variances()[s].sqrt() * z
        })
        .collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let v = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((m - mean).abs() < 5.0 * se, "mean {m} vs {mean}");
    assert!((v - var).abs() < 0.02 * var, "var {v} vs {var}");
}

#[test]
fn oracle_matches_quadrature_for_four_factors() {
    for seed in 0..20 {
        let factors = random_instance(seed, 4, 2);
        let exact = exact_product_moments(&factors).unwrap();
        let (z, m, v) = quad_product_moments(&factors);
        assert_relative_eq!(exact.mean, m, max_relative = 1e-8, epsilon = 1e-12);
        assert_relative_eq!(exact.variance, v, max_relative = 1e-8);
        assert_relative_eq!(
            exact.log_scale,
            z.ln(),
            max_relative = 1e-8,
            epsilon = 1e-10
        );
    }
}

#[test]
fn oracle_of_normal_pdfs_matches_closed_form() {
    let f = [
        Gmm1D::single(1.0, 1.0).unwrap(),
        Gmm1D::single(-1.0, 1.0).unwrap(),
    ];
    let m = exact_product_moments(&f).unwrap();
    assert_relative_eq!(m.mean, 0.0, epsilon = 1e-15);
    assert_relative_eq!(m.variance, 0.5, max_relative = 1e-15);
    let z = integrate(
        |t| gaussian_pdf(t, 1.0, 1.0) * gaussian_pdf(t, -1.0, 1.0),
        -30.0,
        30.0,
        1e-14,
    );
    assert_relative_eq!(m.log_scale, z.ln(), max_relative = 1e-12);
}

#[test]
fn oracle_cap_is_enforced() {
    let factors = random_instance(3, 30, 2);
    assert!(matches!(
        exact_product_moments(&factors),
        Err(Error::CapExceeded { .. })
    ));
    let small = random_instance(3, 5, 2);
    assert!(matches!(
        exact_product_moments_capped(&small, 16),
        Err(Error::CapExceeded {
            components: 32,
            cap: 16
        })
    ));
}

#[test]
fn gmm_json_shape_round_trips() {
    let text = r#"{"weights":[0.4,0.6],"means":[-1.0,2.0],"variances":[0.5,1.5]}"#;
    let g: Gmm1D = serde_json::from_str(text).unwrap();
    let again: Gmm1D = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(g, again);
    assert!(
        serde_json::from_str::<Gmm1D>(r#"{"weights":[1.0],"means":[0.0],"variances":[0.0]}"#)
            .is_err()
    );
    assert!(serde_json::from_str::<Gmm1D>(
        r#"{"weights":[1.0],"means":[0.0],"variances":[1.0],"x":1}"#
    )
    .is_err());
}

fn arb_nat() -> impl Strategy<Value = GaussianNat> {
    (-5.0..5.0f64, prop_oneof![0.05..10.0f64, -10.0..-0.05f64])
        .prop_map(|(nu, xi)| GaussianNat::new(nu, xi))
}

fn arb_gmm(k: usize) -> impl Strategy<Value = Gmm1D> {
    (
        prop::collection::vec(0.05..1.0f64, k),
        prop::collection::vec(-3.0..3.0f64, k),
        prop::collection::vec(0.1..2.0f64, k),
    )
        .prop_map(|(w, m, v)| {
            let total: f64 = w.iter().sum();
            Gmm1D::new(w.iter().map(|x| x / total).collect(), m, v).unwrap()
        })
}

proptest! {
    #[test]
    fn moment_round_trip_within_ulps(mu in -1e3..1e3f64, tau in prop_oneof![1e-3..1e3f64, -1e3..-1e-3f64]) {
        let back = moment_from_nat(&nat_from_moment_parts(mu, tau).unwrap()).unwrap();
        prop_assert!((back.mu() - mu).abs() <= 4.0 * f64::EPSILON * mu.abs().max(f64::MIN_POSITIVE));
        prop_assert!((back.tau() - tau).abs() <= 4.0 * f64::EPSILON * tau.abs());
    }

    #[test]
    fn reproduction_is_commutative(a in arb_nat(), b in arb_nat()) {
        let ab = reproduce_nat(a, b);
        let ba = reproduce_nat(b, a);
        prop_assert_eq!(ab.product, ba.product);
        prop_assert!((ab.log_scale - ba.log_scale).abs() <= 1e-12 * (1.0 + ab.log_scale.abs()));
    }

    #[test]
    fn reproduction_is_associative(a in arb_nat(), b in arb_nat(), c in arb_nat()) {
        let ab = reproduce_nat(a, b);
        let bc = reproduce_nat(b, c);
        prop_assume!(ab.product.xi.abs() > 1e-3 && bc.product.xi.abs() > 1e-3);
        prop_assume!((ab.product.xi + c.xi).abs() > 1e-3);
        let left = ab.log_scale + reproduce_nat(ab.product, c).log_scale;
        let right = bc.log_scale + reproduce_nat(a, bc.product).log_scale;
        prop_assert!((left - right).abs() <= 1e-8 * (1.0 + left.abs()), "{} vs {}", left, right);
    }

    #[test]
    fn oracle_is_permutation_invariant(fs in prop::collection::vec(arb_gmm(2), 2..6), rot in 0usize..5) {
        let mut perm = fs.clone();
        perm.rotate_left(rot % fs.len());
        perm.reverse();
        let a = exact_product_moments(&fs).unwrap();
        let b = exact_product_moments(&perm).unwrap();
        prop_assert!((a.mean - b.mean).abs() <= 1e-10 * (1.0 + a.mean.abs()));
        prop_assert!((a.variance - b.variance).abs() <= 1e-10 * a.variance);
    }

    #[test]
    fn integrability_agrees_with_quadrature(f in arb_gmm(2), nu in -2.0..2.0f64, xi in -12.0..3.0f64) {
        let cav = GaussianNat::new(nu, xi);
        let combined = f.min_precision().1 + xi;
        prop_assume!(combined.abs() > 0.05);
        // Integrable iff the mass on [-R, R] stops growing with R.
        let integrand = tilted(&f, cav);
        let mass = |r: f64| integrate(&integrand, -r, r, 1e-12);
        // Past every component's centre plus many standard deviations.
        let r = (0..f.len())
            .map(|s| {
                let c = (f.nat_precisions()[s] + xi).abs();
                (f.nat_means()[s] + nu).abs() / c + 12.0 / c.sqrt()
            })
            .fold(0.0, f64::max);
        let (inner, outer) = (mass(r), mass(1.5 * r));
        let settled = outer.is_finite() && (outer - inner).abs() <= 1e-8 * outer;
        prop_assert_eq!(check_integrability(&f, cav) == IntegrabilityStatus::Integrable, settled);
    }

    #[test]
    fn posterior_weights_form_a_distribution(f in arb_gmm(3), cav in arb_nat()) {
        match gmm_times_gaussian(&f, cav) {
            Ok(post) => {
                let total: f64 = post.weights.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(post.moments.variance > 0.0);
                prop_assert!(check_integrability(&f, cav).is_integrable());
            }
            Err(_) => prop_assert!(!check_integrability(&f, cav).is_integrable()),
        }
    }
}

#[test]
fn zero_precision_reproduction_status() {
    let r = reproduce_nat(GaussianNat::new(1.0, 0.0), GaussianNat::new(1.0, 0.0));
    assert_eq!(r.status, ReproductionStatus::NonIntegrableProduct);
}
