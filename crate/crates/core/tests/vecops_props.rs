//! Property tests for the truncation, shortening, and projection operators.

use odg::vecops::{hull_distance, project, shorten, truncate, ConvexTarget};
use proptest::prelude::*;

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, dim)
}

fn lambda_strategy() -> impl Strategy<Value = f64> {
    (1e-3f64..50.0).prop_map(|v| v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn split_is_exact_and_norms_match(
        a in (1usize..5).prop_flat_map(vec_strategy),
        lambda in lambda_strategy(),
    ) {
        let t = truncate(lambda, &a).unwrap();
        let s = shorten(lambda, &a).unwrap();
        let na = norm(&a);
        // T + S reassembles a to rounding: the two scalar factors are
        // computed separately, so the sum can miss by an ulp.
        for i in 0..a.len() {
            prop_assert!((t[i] + s[i] - a[i]).abs() <= 1e-14 * (1.0 + a[i].abs()));
        }
        prop_assert!(norm(&t) <= lambda.min(na) * (1.0 + 1e-12) + 1e-15);
        let excess = (na - lambda).max(0.0);
        prop_assert!((norm(&s) - excess).abs() <= 1e-10 * (1.0 + excess));
    }

    #[test]
    fn truncation_and_shortening_contract(
        (a, b) in (1usize..5).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
        lambda in lambda_strategy(),
    ) {
        let scale = 1.0 + norm(&a) + norm(&b);
        let d_ab = norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        let ta = truncate(lambda, &a).unwrap();
        let tb = truncate(lambda, &b).unwrap();
        let d_t = norm(&ta.iter().zip(&tb).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(d_t <= d_ab + 1e-10 * scale);
        let sa = shorten(lambda, &a).unwrap();
        let sb = shorten(lambda, &b).unwrap();
        let d_s = norm(&sa.iter().zip(&sb).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(d_s <= d_ab + 1e-10 * scale);
    }

    #[test]
    fn smaller_level_shortens_no_less(
        a in (1usize..5).prop_flat_map(vec_strategy),
        lambda in lambda_strategy(),
        frac in 0.01f64..1.0,
    ) {
        let gamma = lambda * frac;
        let s_l = norm(&shorten(lambda, &a).unwrap());
        let s_g = norm(&shorten(gamma, &a).unwrap());
        prop_assert!(s_l <= s_g + 1e-12 * (1.0 + s_g));
    }

    #[test]
    fn ball_projection_contracts_and_is_idempotent(
        (a, b) in (2usize..4).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
        radius in 0.1f64..20.0,
    ) {
        let k = ConvexTarget::ball(vec![0.0; a.len()], radius).unwrap();
        let pa = project(&k, &a).unwrap();
        let pb = project(&k, &b).unwrap();
        let d_ab = norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        let d_p = norm(&pa.iter().zip(&pb).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(d_p <= d_ab + 1e-10 * (1.0 + d_ab));
        let ppa = project(&k, &pa).unwrap();
        prop_assert!(norm(&ppa.iter().zip(&pa).map(|(x, y)| x - y).collect::<Vec<_>>()) <= 1e-10);
    }

    #[test]
    fn hull_projection_satisfies_the_variational_inequality(
        a in vec_strategy(2),
        pts in prop::collection::vec(vec_strategy(2), 3..8),
    ) {
        let k = ConvexTarget::hull(pts.clone()).unwrap();
        let pa = project(&k, &a).unwrap();
        // <a - Pa, k - Pa> <= 0 for every extreme point k
        let scale = 1.0 + norm(&a) + pts.iter().map(|p| norm(p)).fold(0.0, f64::max);
        for p in &pts {
            let inner: f64 = (0..a.len())
                .map(|i| (a[i] - pa[i]) * (p[i] - pa[i]))
                .sum();
            prop_assert!(inner <= 1e-8 * scale * scale, "inner = {inner}");
        }
    }

    #[test]
    fn convex_combinations_have_zero_hull_distance(
        pts in prop::collection::vec(vec_strategy(2), 3..6),
        weights in prop::collection::vec(0.0f64..1.0, 6),
    ) {
        let wsum: f64 = weights.iter().take(pts.len()).sum();
        prop_assume!(wsum > 1e-9);
        let mut inside = vec![0.0; 2];
        for (p, w) in pts.iter().zip(&weights) {
            for i in 0..2 {
                inside[i] += w / wsum * p[i];
            }
        }
        let d = hull_distance(&pts, &inside).unwrap();
        let scale = 1.0 + pts.iter().map(|p| norm(p)).fold(0.0, f64::max);
        prop_assert!(d <= 1e-8 * scale, "distance {d}");
    }
}
