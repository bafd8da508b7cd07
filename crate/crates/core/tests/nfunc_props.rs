//! Property tests for the N-function families: duality, growth, and the
//! Young inequality, with the tabulated family tracking its source.

use odg::nfunc::NFunction;
use proptest::prelude::*;

fn families() -> Vec<NFunction> {
    vec![
        NFunction::power(1.5).unwrap(),
        NFunction::power(2.0).unwrap(),
        NFunction::power(3.0).unwrap(),
        NFunction::power_sum(1.5, 3.0).unwrap(),
        NFunction::power_sum(2.0, 4.0).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn young_inequality_with_equality_at_the_derivative(
        which in 0usize..5,
        s in 1e-3f64..50.0,
        t in 1e-3f64..50.0,
    ) {
        let phi = &families()[which];
        let lhs = s * t;
        let rhs = phi.eval(s).unwrap() + phi.conjugate(t).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-12);
        // equality when t = phi'(s)
        let teq = phi.deriv(s).unwrap();
        let lhs_eq = s * teq;
        let rhs_eq = phi.eval(s).unwrap() + phi.conjugate(teq).unwrap();
        prop_assert!((lhs_eq - rhs_eq).abs() <= 1e-8 * (1.0 + rhs_eq.abs()));
    }

    #[test]
    fn conjugate_duality_round_trip(
        which in 0usize..5,
        t in 1e-2f64..20.0,
    ) {
        // (phi*)*(t) = phi(t): evaluate the biconjugate by direct
        // maximization of st - phi*(s) over a fine grid around phi'(t).
        let phi = &families()[which];
        let target = phi.eval(t).unwrap();
        let d = phi.deriv(t).unwrap();
        let mut best = f64::MIN;
        for k in -400..=400 {
            let s = d * (1.0 + k as f64 * 2.5e-4);
            if s <= 0.0 { continue; }
            let val = s * t - phi.conjugate(s).unwrap();
            best = best.max(val);
        }
        prop_assert!((best - target).abs() <= 1e-8 * (1.0 + target));
    }

    #[test]
    fn derivative_inverse_round_trips(
        which in 0usize..5,
        t in 1e-2f64..50.0,
    ) {
        let phi = &families()[which];
        let y = phi.deriv(t).unwrap();
        let back = phi.deriv_inv(y).unwrap();
        prop_assert!((back - t).abs() <= 1e-8 * (1.0 + t));
        let v = phi.eval(t).unwrap();
        let inv = phi.inv(v).unwrap();
        prop_assert!((inv - t).abs() <= 1e-8 * (1.0 + t));
    }

    #[test]
    fn doubling_stays_under_the_upper_index_bound(
        which in 0usize..5,
        t in 1e-3f64..50.0,
    ) {
        let phi = &families()[which];
        let (_, q) = phi.indices();
        let ratio = phi.eval(2.0 * t).unwrap() / phi.eval(t).unwrap();
        prop_assert!(ratio <= 2f64.powf(q) * (1.0 + 1e-10));
    }

    #[test]
    fn values_and_derivatives_increase(
        which in 0usize..5,
        t in 1e-3f64..50.0,
        bump in 1e-3f64..10.0,
    ) {
        let phi = &families()[which];
        prop_assert!(phi.eval(t + bump).unwrap() > phi.eval(t).unwrap());
        prop_assert!(phi.deriv(t + bump).unwrap() > phi.deriv(t).unwrap());
        // convexity along the secant
        let mid = phi.eval(t + 0.5 * bump).unwrap();
        let chord = 0.5 * (phi.eval(t).unwrap() + phi.eval(t + bump).unwrap());
        prop_assert!(mid <= chord * (1.0 + 1e-12));
    }

    #[test]
    fn tabulated_tracks_its_source(
        p in 1.3f64..3.5,
        t in 0.05f64..8.0,
    ) {
        let source = NFunction::power(p).unwrap();
        let points: Vec<(f64, f64)> = (0..60)
            .map(|k| {
                let x = 1e-3 * (1e4f64).powf(k as f64 / 59.0);
                (x, source.eval(x).unwrap())
            })
            .collect();
        let tab = NFunction::tabulated(&points).unwrap();
        let a = tab.eval(t).unwrap();
        let b = source.eval(t).unwrap();
        prop_assert!((a - b).abs() <= 2e-3 * (1.0 + b), "p={p} t={t}: {a} vs {b}");
    }
}
