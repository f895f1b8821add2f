mod common;

use common::*;
use proptest::prelude::*;
use weierstrass::{Expression, Term};

fn abs_scale(e: &Expression, p: &[f64]) -> f64 {
    e.terms()
        .iter()
        .map(|t| t.value(p).abs())
        .sum::<f64>()
        .max(1.0)
}

fn polynomial(n: usize) -> BoxedStrategy<Expression> {
    expression_of(n, monomial(n, 3).boxed(), 4).boxed()
}

fn trigonometric(n: usize) -> BoxedStrategy<Expression> {
    expression_of(n, trig(n, 3, true).boxed(), 4).boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonicalize_is_idempotent(e in any_expression()) {
        let once = e.canonicalize();
        prop_assert_eq!(once.canonicalize(), once.clone());
        prop_assert_eq!(once, e);
    }

    #[test]
    fn uncanonical_input_canonicalizes_to_the_same_value(
        (n, terms, p) in (1usize..=3).prop_flat_map(|n| (
            Just(n),
            prop::collection::vec(any_term(n), 0..6),
            point(n),
        ))
    ) {
        let raw = Expression::uncanonical(n, terms.clone()).unwrap();
        let canon = raw.canonicalize();
        let direct: f64 = terms.iter().map(|t| t.value(&p)).sum();
        prop_assert!(rel_close(canon.eval(&p).unwrap(), direct, 1e-12));
    }

    #[test]
    fn add_is_commutative_and_associative(
        (a, b, c) in (1usize..=3).prop_flat_map(|n| {
            let e = || expression_of(n, any_term(n).boxed(), 4);
            (e(), e(), e())
        })
    ) {
        prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        let left = a.add(&b).unwrap().add(&c).unwrap();
        let right = a.add(&b.add(&c).unwrap()).unwrap();
        prop_assert!(left.approx_eq(&right, 1e-15), "{:?} vs {:?}", left, right);
        prop_assert_eq!(a.add(&Expression::zero(a.dimension())).unwrap(), a);
    }

    #[test]
    fn structural_equality_implies_equal_values(
        (e, pts) in (1usize..=3).prop_flat_map(|n| (
            expression_of(n, any_term(n).boxed(), 5),
            prop::collection::vec(point(n), 100),
        ))
    ) {
        let copy: Expression = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        prop_assert_eq!(&copy, &e);
        for p in &pts {
            prop_assert!(rel_close(copy.eval(p).unwrap(), e.eval(p).unwrap(), 1e-12));
        }
    }

    #[test]
    fn polynomial_products_evaluate_pointwise(
        (a, b, pts) in (1usize..=3).prop_flat_map(|n| (polynomial(n), polynomial(n), prop::collection::vec(point(n), 10)))
    ) {
        let prod = a.expand_product(&b).unwrap();
        for p in &pts {
            let want = a.eval(p).unwrap() * b.eval(p).unwrap();
            let tol = 1e-10 * abs_scale(&a, p) * abs_scale(&b, p);
            prop_assert!((prod.eval(p).unwrap() - want).abs() <= tol);
        }
    }

    #[test]
    fn trig_products_evaluate_pointwise(
        (a, b, pts) in (1usize..=3).prop_flat_map(|n| (trigonometric(n), trigonometric(n), prop::collection::vec(point(n), 10)))
    ) {
        let prod = a.expand_product(&b).unwrap();
        for p in &pts {
            let want = a.eval(p).unwrap() * b.eval(p).unwrap();
            let tol = 1e-10 * abs_scale(&a, p) * abs_scale(&b, p);
            prop_assert!((prod.eval(p).unwrap() - want).abs() <= tol);
        }
    }

    #[test]
    fn powers_match_repeated_products(
        (a, k, p) in (1usize..=2).prop_flat_map(|n| (trigonometric(n), 0u32..4, point(n)))
    ) {
        let pow = a.expand_power(k).unwrap();
        let want = a.eval(&p).unwrap().powi(k as i32);
        let tol = 1e-10 * abs_scale(&a, &p).powi(k as i32);
        prop_assert!((pow.eval(&p).unwrap() - want).abs() <= tol);
    }

    #[test]
    fn canonical_trig_terms_are_normalized(e in (1usize..=3).prop_flat_map(trigonometric)) {
        for t in e.terms() {
            if let Term::Trig(t) = t {
                prop_assert!(t.freqs.iter().all(|&k| k >= 0));
                prop_assert!(t.freqs.iter().any(|&k| k > 0));
                for (&k, &phi) in t.freqs.iter().zip(&t.phases) {
                    prop_assert!((0.0..std::f64::consts::PI).contains(&phi));
                    if k == 0 {
                        prop_assert_eq!(phi, 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn gradient_of_mixed_products_is_rejected() {
    let x = Expression::variable(2, 0);
    let rbf = weierstrass::parser::parse("rbf(amp=1, center=[0, 0], width=1)").unwrap();
    assert!(x.expand_product(&rbf).is_err());
    assert!(rbf.expand_product(&Expression::constant(2, 3.0)).is_ok());
}
