mod common;

use common::*;
use proptest::prelude::*;
use weierstrass::oracle::{oracle_convolve, OracleConfig};
use weierstrass::smoothing::smooth;
use weierstrass::{Expression, SmoothSigma, Term};

fn sig(s: f64) -> SmoothSigma {
    SmoothSigma::new(s).unwrap()
}

fn scale_at(e: &Expression, p: &[f64]) -> f64 {
    e.terms()
        .iter()
        .map(|t| t.value(p).abs())
        .sum::<f64>()
        .max(1e-300)
}

fn sigma_choice() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.1), Just(0.5), Just(1.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn zero_sigma_is_identity(e in any_expression()) {
        prop_assert_eq!(smooth(&e, SmoothSigma::ZERO), e.canonicalize());
    }

    #[test]
    fn smoothing_is_linear(
        (a, b, s) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, any_term(n).boxed(), 4),
            expression_of(n, any_term(n).boxed(), 4),
            0.0..1.5f64,
        ))
    ) {
        let lhs = smooth(&a.add(&b).unwrap(), sig(s));
        let rhs = smooth(&a, sig(s)).add(&smooth(&b, sig(s))).unwrap();
        prop_assert!(lhs.approx_eq(&rhs, 1e-12), "{:?}\n{:?}", lhs, rhs);
    }

    #[test]
    fn semigroup_structural(
        (e, s1, s2) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, prop_oneof![rbf(n), trig(n, 3, true), linear_arg(n, false), linear_arg(n, true)].boxed(), 4),
            prop_oneof![Just(0.3), Just(0.7), Just(1.2)],
            prop_oneof![Just(0.3), Just(0.7), Just(1.2)],
        ))
    ) {
        let twice = smooth(&smooth(&e, sig(s1)), sig(s2));
        let once = smooth(&e, sig(s1).then(sig(s2)));
        prop_assert!(twice.approx_eq(&once, 1e-12), "{:?}\n{:?}", twice, once);
    }

    #[test]
    fn semigroup_pointwise_for_polynomials(
        (e, s1, s2, pts) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, monomial(n, 6).boxed(), 4),
            prop_oneof![Just(0.3), Just(0.7), Just(1.2)],
            prop_oneof![Just(0.3), Just(0.7), Just(1.2)],
            prop::collection::vec(point(n), 5),
        ))
    ) {
        let twice = smooth(&smooth(&e, sig(s1)), sig(s2));
        let once = smooth(&e, sig(s1).then(sig(s2)));
        for p in &pts {
            let (a, b) = (twice.eval(p).unwrap(), once.eval(p).unwrap());
            prop_assert!((a - b).abs() <= 1e-10 * scale_at(&once, p).max(1.0));
        }
    }

    #[test]
    fn heat_flow(
        (e, p, s) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, smooth_term(n).boxed(), 1).prop_filter("nonempty", |e| !e.is_empty()),
            point(n),
            0.3..1.2f64,
        ))
    ) {
        let g = |x: &[f64], s: f64| smooth(&e, sig(s)).eval(x).unwrap();
        let hs = 1e-4;
        let dg = (g(&p, s + hs) - g(&p, s - hs)) / (2.0 * hs);
        let h = 1e-3;
        let g0 = g(&p, s);
        let mut lap = 0.0;
        for d in 0..p.len() {
            let mut up = p.clone();
            let mut down = p.clone();
            up[d] += h;
            down[d] -= h;
            lap += (g(&up, s) - 2.0 * g0 + g(&down, s)) / (h * h);
        }
        let rhs = s * lap;
        let scale = scale_at(&smooth(&e, sig(s)), &p);
        prop_assert!(
            (dg - rhs).abs() <= 1e-4 * dg.abs().max(rhs.abs()) + 1e-8 * scale,
            "{dg} vs {rhs}"
        );
    }

    #[test]
    fn gradient_matches_central_differences(
        (e, p, s) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, any_term(n).boxed(), 5),
            point(n),
            0.2..1.0f64,
        ))
    ) {
        let g = smooth(&e, sig(s));
        let grad = g.gradient(&p).unwrap();
        let h = 1e-5;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for d in 0..p.len() {
            let mut up = p.clone();
            let mut down = p.clone();
            up[d] += h;
            down[d] -= h;
            let fd = (g.eval(&up).unwrap() - g.eval(&down).unwrap()) / (2.0 * h);
            err2 += (fd - grad[d]).powi(2);
            norm2 += grad[d] * grad[d];
        }
        prop_assert!(err2.sqrt() <= 1e-6 * norm2.sqrt().max(1.0), "{grad:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_forms_match_the_oracle(
        (e, pts, s) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, prop_oneof![monomial(n, 6), rbf(n), trig(n, 3, false), linear_arg(n, false), linear_arg(n, true)].boxed(), 3),
            prop::collection::vec(point(n), 3),
            sigma_choice(),
        ))
    ) {
        let tol = if e.has_nonsmooth_terms() { 1e-6 } else { 1e-8 };
        let closed = smooth(&e, sig(s));
        let cfg = OracleConfig::default();
        for p in &pts {
            let est = oracle_convolve(&e, s, p, &cfg).unwrap();
            let got = closed.eval(p).unwrap();
            prop_assert!((got - est.value).abs() <= tol, "{got} vs {} at {p:?}", est.value);
        }
    }
}

#[test]
fn smoothing_keeps_every_family_closed() {
    let e = weierstrass::parser::parse(
        "x1^3 + rbf(amp=2, center=[1, 0], width=0.5) + cos(x1)*sin(2*x2) - relu(x1 - x2)",
    )
    .unwrap();
    let g = smooth(&e, sig(0.4));
    let families: Vec<&str> = g.terms().iter().map(Term::family).collect();
    assert!(
        families.contains(&"rbf") && families.contains(&"trig") && families.contains(&"linear_arg")
    );
}
