use fracbvp::splines::{bernstein_eval, graded_knots, spline_project};
use fracbvp::{GradedKnotParams, KnotCollection, WeightedSpline};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn knots_from_cuts(a: f64, b: f64, cuts: &[f64]) -> KnotCollection {
    let mut pts: Vec<f64> = cuts.iter().map(|c| a + c * (b - a)).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-6 * (b - a));
    KnotCollection::new(pts).unwrap()
}

proptest! {
    #[test]
    fn bernstein_basis_partitions_unity(q in 1usize..24, a in -2.0f64..2.0, w in 0.01f64..3.0, seed in any::<u64>()) {
        let b = a + w;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let t = rng.gen_range(a..=b);
            let mut total = 0.0;
            for j in 0..=q {
                let mut e = vec![0.0; q + 1];
                e[j] = 1.0;
                let v = bernstein_eval(&e, a, b, t).unwrap();
                prop_assert!(v >= -1e-15);
                total += v;
            }
            prop_assert!((total - 1.0).abs() < 1e-14, "sum {total} at t = {t}");
        }
    }

    #[test]
    fn affine_functions_are_reproduced(
        q in 1usize..16,
        slope in -5.0f64..5.0,
        offset in -5.0f64..5.0,
        cuts in prop::collection::vec(0.0f64..1.0, 0..12),
    ) {
        let knots = knots_from_cuts(0.5, 4.0, &cuts);
        let ws = spline_project(|t, out| out[0] = slope * t + offset, &knots, q, 1.0, 1).unwrap();
        for i in 0..=200 {
            let t = 0.5 + 3.5 * i as f64 / 200.0;
            let v = ws.eval(t).unwrap()[0];
            prop_assert!((v - (slope * t + offset)).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn bernstein_error_bound_holds(q in 1usize..12, cuts in prop::collection::vec(0.0f64..1.0, 0..30)) {
        let w = |t: f64| t.powf(0.9);
        let knots = knots_from_cuts(0.1, 3.0, &cuts);
        let ws = spline_project(|t, out| out[0] = w(t), &knots, q, 1.0, 1).unwrap();
        let sq = (q as f64).sqrt();
        // w is increasing and concave, so its modulus on an interval is attained at the left end
        let mut modulus = 0.0f64;
        for i in 0..knots.len() {
            let (a, b) = knots.interval(i);
            let delta = ((b - a) / sq).min(b - a);
            modulus = modulus.max(w(a + delta) - w(a));
        }
        let bound = 1.25 * modulus;
        let mut worst = 0.0f64;
        for i in 0..knots.len() {
            let (a, b) = knots.interval(i);
            for j in 0..=50 {
                let t = a + (b - a) * j as f64 / 50.0;
                worst = worst.max((ws.eval(t).unwrap()[0] - w(t)).abs());
            }
        }
        prop_assert!(worst <= bound, "error {worst} exceeds bound {bound}");
    }

    #[test]
    fn graded_knots_cover_without_gaps(
        c in 1.05f64..3.0,
        h_max in 1e-3f64..0.5,
        log_eps in -12.0f64..-2.0,
        horizon in 0.1f64..5.0,
        gamma_exp in 0.05f64..=1.0,
    ) {
        let eps = 10f64.powf(log_eps);
        prop_assume!(eps < horizon);
        let params = GradedKnotParams { c, h_max, eps, horizon };
        let knots = graded_knots(&params, gamma_exp).unwrap();
        let pts = knots.breakpoints();
        prop_assert_eq!(pts[0], eps);
        prop_assert_eq!(*pts.last().unwrap(), horizon);
        let widths: f64 = pts.windows(2).map(|p| p[1] - p[0]).sum();
        prop_assert!((widths - (horizon - eps)).abs() < 1e-12 * horizon);
        for p in pts.windows(2) {
            prop_assert!(p[1] > p[0]);
            prop_assert!(p[1] - p[0] <= h_max * (1.0 + 1e-12) + 1e-12 * horizon);
            if gamma_exp < 1.0 {
                prop_assert!((p[1] / p[0]).powf(1.0 - gamma_exp) <= c * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn json_and_csv_round_trip(q in 1usize..6, dim in 1usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let knots = KnotCollection::uniform(1e-3, 2.0, 0.3).unwrap();
        let coeffs: Vec<f64> = (0..knots.len() * dim * (q + 1)).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let ws = WeightedSpline::new(knots, 0.75, q, dim, coeffs).unwrap();
        prop_assert_eq!(&WeightedSpline::from_json(&ws.to_json().unwrap()).unwrap(), &ws);
        prop_assert_eq!(&WeightedSpline::from_csv(&ws.to_csv()).unwrap(), &ws);
    }
}
