use fracbvp::oracle::{integrate, quad_frac_integral, QuadratureSpec};
use fracbvp::specfun::{
    beta, frac_int_monomial_full, frac_int_monomial_segment, gamma, incomplete_beta, ln_gamma,
};
use proptest::prelude::*;

fn spec() -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_subdivisions: 4000,
        endpoint_substitution: true,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn incomplete_beta_matches_quadrature(z in 0.01f64..0.99, a in 0.2f64..4.0, b in 0.2f64..4.0) {
        let q = integrate(|s| s.powf(a - 1.0) * (1.0 - s).powf(b - 1.0), 0.0, z, &spec()).unwrap();
        let v = incomplete_beta(z, a, b).unwrap();
        prop_assert!(rel(v, q) < 1e-10, "B_{z}({a},{b}) = {v}, quadrature {q}");
    }

    #[test]
    fn incomplete_beta_plus_tail_is_complete(z in 0.01f64..0.99, a in 0.2f64..4.0, b in 0.2f64..4.0) {
        // in v = 1 − s the singular end sits at zero
        let tail = integrate(|v| (1.0 - v).powf(a - 1.0) * v.powf(b - 1.0), 0.0, 1.0 - z, &spec()).unwrap();
        let full = beta(a, b).unwrap();
        prop_assert!((incomplete_beta(z, a, b).unwrap() + tail - full).abs() < 1e-11 * full.max(1.0));
    }

    #[test]
    fn monomial_integral_matches_quadrature(mu in 0.1f64..1.5, k in -0.5f64..3.0, t in 0.1f64..5.0) {
        let q = quad_frac_integral(|s| s.powf(k), mu, 0.0, t, &QuadratureSpec { rel_tol: 1e-12, ..spec() }).unwrap();
        let v = frac_int_monomial_full(mu, k, t).unwrap();
        prop_assert!(rel(v, q) < 1e-10, "mu={mu} k={k} t={t}: {v} vs {q}");
    }

    #[test]
    fn gamma_recurrence(x in 0.05f64..30.0) {
        let g = gamma(x).unwrap();
        prop_assert!(rel(gamma(x + 1.0).unwrap(), x * g) < 1e-13);
        prop_assert!((ln_gamma(x).unwrap() - g.ln()).abs() < 1e-12 * g.ln().abs().max(1.0));
    }

    #[test]
    fn segments_telescope(
        alpha in 0.1f64..1.0,
        k in -0.9f64..3.0,
        t in 0.1f64..5.0,
        cuts in prop::collection::vec(0.0f64..1.0, 1..20),
    ) {
        let mut pts: Vec<f64> = cuts.iter().map(|c| c * t).collect();
        pts.push(0.0);
        pts.push(t);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut sum = 0.0;
        for w in pts.windows(2) {
            let s = frac_int_monomial_segment(alpha, k, w[0], w[1], t).unwrap();
            prop_assert!(s >= 0.0);
            sum += s;
        }
        let full = frac_int_monomial_full(alpha, k, t).unwrap();
        prop_assert!((sum - full).abs() < 1e-11 * full.max(1.0), "{sum} vs {full}");
    }
}

#[test]
fn semigroup_on_monomials() {
    let orders = [0.25, 0.5, 0.75];
    for &a in &orders {
        for &a2 in &orders {
            for k in [0.0, 0.9, 2.0] {
                for t in [0.5, 1.0, 3.0] {
                    // I^a s^k = c1 s^{a+k}, then I^{a2} of that monomial
                    let c1 = frac_int_monomial_full(a, k, 1.0).unwrap();
                    let composed = c1 * frac_int_monomial_full(a2, a + k, t).unwrap();
                    let direct = frac_int_monomial_full(a + a2, k, t).unwrap();
                    assert!(
                        (composed - direct).abs() < 1e-11 * direct.max(1.0),
                        "a={a} a2={a2} k={k} t={t}: {composed} vs {direct}"
                    );
                }
            }
        }
    }
}
