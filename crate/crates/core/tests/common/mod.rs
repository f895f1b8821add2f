#![allow(dead_code)]

use proptest::prelude::*;
use std::f64::consts::TAU;
use weierstrass::{Activation, Expression, LinearArgTerm, MonomialTerm, RbfTerm, Term, TrigTerm};

fn nonzero(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi).prop_filter("nonzero", |c: &f64| c.abs() > 1e-3)
}

pub fn monomial(n: usize, max_exp: u32) -> impl Strategy<Value = Term> {
    (nonzero(-3.0, 3.0), prop::collection::vec(0..=max_exp, n))
        .prop_map(|(coeff, exponents)| Term::Monomial(MonomialTerm { coeff, exponents }))
}

pub fn rbf(n: usize) -> impl Strategy<Value = Term> {
    (
        nonzero(-2.0, 2.0),
        prop::collection::vec(-2.0..2.0f64, n),
        0.2..2.0f64,
    )
        .prop_map(|(amp, center, width)| Term::Rbf(RbfTerm { amp, center, width }))
}

pub fn trig(n: usize, max_freq: i64, damped: bool) -> impl Strategy<Value = Term> {
    let damping = if damped {
        (0.0..1.0f64).boxed()
    } else {
        Just(0.0).boxed()
    };
    (
        nonzero(-3.0, 3.0),
        prop::collection::vec(-max_freq..=max_freq, n),
        prop::collection::vec(0.0..TAU, n),
        damping,
    )
        .prop_map(|(coeff, freqs, phases, damping)| {
            Term::Trig(TrigTerm {
                coeff,
                freqs,
                phases,
                damping,
            })
        })
}

pub fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Sign),
        Just(Activation::Relu),
        Just(Activation::Sin)
    ]
}

pub fn linear_arg(n: usize, smoothed: bool) -> impl Strategy<Value = Term> {
    let sigma = if smoothed {
        (0.2..1.0f64).boxed()
    } else {
        Just(0.0).boxed()
    };
    (
        nonzero(-2.0, 2.0),
        activation(),
        prop::collection::vec(-2.0..2.0f64, n).prop_filter("nonzero direction", |d| {
            d.iter().map(|v| v * v).sum::<f64>() > 0.01
        }),
        sigma,
    )
        .prop_map(|(coeff, activation, direction, s)| {
            Term::LinearArg(LinearArgTerm {
                coeff,
                activation,
                direction,
                smoothed_sigma: s,
            })
        })
}

/// Any term of the four families over `n` variables.
pub fn any_term(n: usize) -> impl Strategy<Value = Term> {
    prop_oneof![
        monomial(n, 4),
        rbf(n),
        trig(n, 3, true),
        linear_arg(n, false),
        linear_arg(n, true),
    ]
}

pub fn expression_of(
    n: usize,
    term: BoxedStrategy<Term>,
    max_terms: usize,
) -> impl Strategy<Value = Expression> {
    prop::collection::vec(term, 0..=max_terms)
        .prop_map(move |terms| Expression::new(n, terms).unwrap())
}

pub fn any_expression() -> impl Strategy<Value = Expression> {
    (1usize..=3).prop_flat_map(|n| expression_of(n, any_term(n).boxed(), 5))
}

/// Expressions whose transform is smooth at every scale.
pub fn smooth_term(n: usize) -> impl Strategy<Value = Term> {
    prop_oneof![
        monomial(n, 4),
        rbf(n),
        trig(n, 3, true),
        linear_arg(n, true)
    ]
}

pub fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
