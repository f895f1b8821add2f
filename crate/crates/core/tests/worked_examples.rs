use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use statrs::function::erf::erf;
use weierstrass::kernel::{
    affine_kernel_convolve, gaussian_product, GaussianKernel, ScaledGaussian,
};
use weierstrass::oracle::{oracle_convolve, oracle_moment, OracleConfig};
use weierstrass::parser::{parse, parse_in, print};
use weierstrass::quadrature::GaussHermite;
use weierstrass::smoothing::{
    gradient, monomial_table, smooth, smooth_linear_arg, smooth_monomial, smooth_polynomial,
    smooth_rbf, smooth_trig,
};
use weierstrass::{Activation, Expression, LinearArgTerm, RbfTerm, SmoothSigma, Term, TrigTerm};

fn sig(s: f64) -> SmoothSigma {
    SmoothSigma::new(s).unwrap()
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn eval_examples() {
    let e = parse("x1^2*x2").unwrap();
    assert_eq!(e.eval(&[2.0, 3.0]).unwrap(), 12.0);
    let e = parse("rbf(amp=1, center=[0], width=1)").unwrap();
    assert_eq!(e.eval(&[0.0]).unwrap(), 1.0);
    let t = Term::Trig(TrigTerm {
        coeff: 1.0,
        freqs: vec![2],
        phases: vec![-FRAC_PI_2],
        damping: 2.0,
    });
    let e = Expression::new(1, vec![t]).unwrap();
    close(e.eval(&[FRAC_PI_4]).unwrap(), (-2.0f64).exp(), 1e-16);
    let err = e.eval(&[1.0, 2.0]).unwrap_err();
    assert!(err.to_string().contains("dimension"));
}

#[test]
fn add_examples() {
    let a = parse("x1^2").unwrap();
    assert_eq!(a.add(&a).unwrap(), parse("2*x1^2").unwrap());
    assert_eq!(a.add(&Expression::zero(1)).unwrap(), a);
    let lambda = Expression::constant(2, 0.1);
    let f = parse("x1^2*x2^3")
        .unwrap()
        .add(
            &lambda
                .expand_product(&parse_in("x1^4", 2).unwrap())
                .unwrap(),
        )
        .unwrap()
        .add(
            &lambda
                .expand_product(&parse_in("x2^4", 2).unwrap())
                .unwrap(),
        )
        .unwrap();
    assert_eq!(f, parse("x1^2*x2^3 + 0.1*(x1^4 + x2^4)").unwrap());
}

#[test]
fn product_examples() {
    let p = parse("sin(x1)")
        .unwrap()
        .expand_product(&parse("cos(x1)").unwrap())
        .unwrap();
    let want = Expression::new(
        1,
        vec![Term::Trig(TrigTerm {
            coeff: 0.5,
            freqs: vec![2],
            phases: vec![-FRAC_PI_2],
            damping: 0.0,
        })],
    )
    .unwrap();
    assert!(p.approx_eq(&want, 1e-15), "{}", print(&p));
    let q = parse_in("x1^2", 2)
        .unwrap()
        .expand_product(&parse_in("x2^3", 2).unwrap())
        .unwrap();
    assert_eq!(q, parse("x1^2*x2^3").unwrap());
}

#[test]
fn quadratic_form_expansion() {
    let square =
        parse("(2*cos(x1) - 3*sin(x2) + 4*cos(x1)*sin(x2) - 8*sin(x1)*cos(x2) + 4)^2").unwrap();
    // the 15-term expansion written out, with the b*c cross term as
    // -24*cos(x)*sin(y)^2
    let expanded = parse(
        "4*cos(x1)^2 + 9*sin(x2)^2 + 16*cos(x1)^2*sin(x2)^2 + 64*sin(x1)^2*cos(x2)^2 + 16 \
         - 12*cos(x1)*sin(x2) + 16*cos(x1)^2*sin(x2) - 32*cos(x1)*sin(x1)*cos(x2) \
         + 16*cos(x1) - 24*sin(x2)^2*cos(x1) + 48*sin(x2)*sin(x1)*cos(x2) - 24*sin(x2) \
         - 64*cos(x1)*sin(x2)*sin(x1)*cos(x2) + 32*cos(x1)*sin(x2) - 64*sin(x1)*cos(x2)",
    )
    .unwrap();
    assert!(
        square.approx_eq(&expanded, 1e-14),
        "{}\n{}",
        print(&square),
        print(&expanded)
    );
    // written with sin(y) instead of sin(y)^2 in that term, the expansion
    // differs from the square by exactly 24*cos(x)*(sin(y)^2 - sin(y))
    let literal = parse(
        "4*cos(x1)^2 + 9*sin(x2)^2 + 16*cos(x1)^2*sin(x2)^2 + 64*sin(x1)^2*cos(x2)^2 + 16 \
         - 12*cos(x1)*sin(x2) + 16*cos(x1)^2*sin(x2) - 32*cos(x1)*sin(x1)*cos(x2) \
         + 16*cos(x1) - 24*sin(x2)*cos(x1) + 48*sin(x2)*sin(x1)*cos(x2) - 24*sin(x2) \
         - 64*cos(x1)*sin(x2)*sin(x1)*cos(x2) + 32*cos(x1)*sin(x2) - 64*sin(x1)*cos(x2)",
    )
    .unwrap();
    let diff = literal.sub(&square).unwrap();
    for p in [[0.3f64, 1.1], [-2.0, 0.4], [1.7, -0.9]] {
        let want = 24.0 * p[0].cos() * (p[1].sin().powi(2) - p[1].sin());
        close(diff.eval(&p).unwrap(), want, 1e-12);
    }
}

#[test]
fn power_examples() {
    assert_eq!(
        parse("(x1 + 1)^2").unwrap(),
        parse("x1^2 + 2*x1 + 1").unwrap()
    );
    let e = parse("sin(x1) + x1").unwrap();
    assert_eq!(e.expand_power(0).unwrap(), Expression::constant(1, 1.0));
    let sq = parse("sin(x1)^2").unwrap();
    for i in 0..=40 {
        let x = -PI + 2.0 * PI * i as f64 / 40.0;
        close(sq.eval(&[x]).unwrap(), x.sin().powi(2), 1e-15);
    }
    assert!(parse("x1").unwrap().expand_power(9).is_err());
}

#[test]
fn canonicalize_examples() {
    assert!(parse("x1^2 - x1^2").unwrap().is_empty());
    let raw = Expression::uncanonical(
        1,
        vec![Term::Trig(TrigTerm {
            coeff: 1.0,
            freqs: vec![-2],
            phases: vec![0.0],
            damping: 0.0,
        })],
    )
    .unwrap();
    let c = raw.canonicalize();
    match &c.terms()[0] {
        Term::Trig(t) => assert_eq!(t.freqs, vec![2]),
        other => panic!("{other:?}"),
    }
    for x in [-1.0, 0.3, 2.2] {
        assert_eq!(c.eval(&[x]).unwrap(), raw.eval(&[x]).unwrap());
    }
}

#[test]
fn monomial_examples() {
    let p2 = smooth_monomial(2, sig(0.7));
    assert!(p2.approx_eq(&parse("0.49 + x1^2").unwrap(), 1e-15));
    assert_eq!(smooth_monomial(0, sig(1.3)), Expression::constant(1, 1.0));
    let u12 = smooth_monomial(12, sig(1.0)).eval(&[0.0]).unwrap();
    let cfg = OracleConfig::default();
    assert_eq!(u12, 10395.0);
    close(u12, oracle_moment(12, 0.0, 1.0, &cfg).unwrap(), 1e-9);
    close(oracle_moment(2, 0.0, 1.0, &cfg).unwrap(), 1.0, 1e-15);
    close(oracle_moment(4, 1.0, 1.0, &cfg).unwrap(), 10.0, 1e-13);
}

#[test]
fn table_examples() {
    let t = monomial_table(10).unwrap();
    assert_eq!(t[1].to_string(), "x");
    assert_eq!(t[4].to_string(), "3*sigma^4 + 6*sigma^2*x^2 + x^4");
    assert_eq!(
        t[10].to_string(),
        "945*sigma^10 + 4725*sigma^8*x^2 + 3150*sigma^6*x^4 + 630*sigma^4*x^6 + 45*sigma^2*x^8 + x^10"
    );
    assert!(monomial_table(65).is_err());
}

#[test]
fn polynomial_example() {
    let lambda = 0.1;
    let s = 0.8;
    let f = parse("x1^2*x2^3 + 0.1*(x1^4 + x2^4)").unwrap();
    let g = smooth_polynomial(&f, sig(s)).unwrap();
    let (s2, s4) = (s * s, s.powi(4));
    let want = parse(&format!(
        "({s2} + x1^2)*(3*{s2}*x2 + x2^3) + {lambda}*(3*{s4} + 6*{s2}*x1^2 + x1^4 + 3*{s4} + 6*{s2}*x2^2 + x2^4)"
    ))
    .unwrap();
    assert!(g.approx_eq(&want, 1e-12), "{}\n{}", print(&g), print(&want));
    assert_eq!(smooth_polynomial(&f, SmoothSigma::ZERO).unwrap(), f);
    assert!(smooth_polynomial(&parse("sin(x1)").unwrap(), sig(1.0)).is_err());
}

#[test]
fn rbf_examples() {
    let e = parse("rbf(amp=1, center=[0], width=1)").unwrap();
    let g = smooth_rbf(&e, sig(1.0)).unwrap();
    match &g.terms()[0] {
        Term::Rbf(r) => {
            close(r.amp, 0.5f64.sqrt(), 1e-15);
            close(r.width, 2f64.sqrt(), 1e-15);
        }
        other => panic!("{other:?}"),
    }
    close(g.eval(&[0.0]).unwrap(), 0.5f64.sqrt(), 1e-15);
    let cfg = OracleConfig::default();
    close(
        oracle_convolve(&e, 1.0, &[0.0], &cfg).unwrap().value,
        0.5f64.sqrt(),
        1e-14,
    );
    assert_eq!(smooth_rbf(&e, SmoothSigma::ZERO).unwrap(), e);

    let e = parse("rbf(amp=2, center=[0.3, -0.4], width=0.5)").unwrap();
    let g = smooth_rbf(&e, sig(0.5)).unwrap();
    match &g.terms()[0] {
        Term::Rbf(RbfTerm { amp, width, .. }) => {
            close(*amp, 1.0, 1e-15);
            close(*width, 0.5f64.sqrt(), 1e-15);
        }
        other => panic!("{other:?}"),
    }
    for p in weierstrass::verify::random_points(2, 10, 3) {
        let est = oracle_convolve(&e, 0.5, &p, &cfg).unwrap();
        close(g.eval(&p).unwrap(), est.value, 1e-12);
    }
}

#[test]
fn trig_table_rows() {
    let s = 0.6;
    let d = |k: f64| (-k * s * s / 2.0).exp();
    type Row<'a> = (&'static str, Box<dyn Fn(f64) -> f64 + 'a>);
    let rows: [Row<'_>; 5] = [
        ("sin(x1)", Box::new(move |x: f64| d(1.0) * x.sin())),
        ("cos(x1)", Box::new(move |x: f64| d(1.0) * x.cos())),
        (
            "sin(x1)^2",
            Box::new(move |x: f64| 0.5 * (1.0 - d(4.0) * (2.0 * x).cos())),
        ),
        (
            "cos(x1)^2",
            Box::new(move |x: f64| 0.5 * (1.0 + d(4.0) * (2.0 * x).cos())),
        ),
        (
            "sin(x1)*cos(x1)",
            Box::new(move |x: f64| d(4.0) * x.sin() * x.cos()),
        ),
    ];
    for (src, want) in rows {
        let g = smooth_trig(&parse(src).unwrap(), sig(s)).unwrap();
        for i in 0..=40 {
            let x = -PI + 2.0 * PI * i as f64 / 40.0;
            close(g.eval(&[x]).unwrap(), want(x), 1e-14);
        }
    }
    let c = Expression::constant(2, 3.0);
    assert_eq!(smooth(&c, sig(2.0)), c);
}

#[test]
fn linear_arg_examples() {
    let s = 0.7;
    let dir = vec![1.5, -0.5, 2.0];
    let t = LinearArgTerm {
        coeff: 1.0,
        activation: Activation::Sign,
        direction: dir.clone(),
        smoothed_sigma: 0.0,
    };
    let smoothed = smooth_linear_arg(&t, sig(s));
    let e = Expression::new(3, vec![Term::LinearArg(smoothed)]).unwrap();
    let w = [0.2, 0.9, -0.1];
    let y: f64 = w.iter().zip(&dir).map(|(a, b)| a * b).sum();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    close(
        e.eval(&w).unwrap(),
        erf(y / (2f64.sqrt() * s * norm)),
        1e-15,
    );

    // sin(w1 x + w2) with the constant carried by a variable fixed at 1
    let x = 1.7;
    let t = LinearArgTerm {
        coeff: 1.0,
        activation: Activation::Sin,
        direction: vec![x, 1.0],
        smoothed_sigma: 0.0,
    };
    let e = Expression::new(2, vec![Term::LinearArg(smooth_linear_arg(&t, sig(s)))]).unwrap();
    let w = [0.4, -1.1];
    let want = (-s * s * (1.0 + x * x) / 2.0).exp() * (w[0] * x + w[1]).sin();
    close(e.eval(&w).unwrap(), want, 1e-15);

    let relu = parse_in("relu(x1)", 4).unwrap();
    let g = smooth(&relu, sig(1.0));
    close(g.eval(&[0.0; 4]).unwrap(), 1.0 / (2.0 * PI).sqrt(), 1e-15);
    let cfg = OracleConfig::default();
    close(
        oracle_convolve(&parse("relu(x1)").unwrap(), 1.0, &[0.0], &cfg)
            .unwrap()
            .value,
        1.0 / (2.0 * PI).sqrt(),
        1e-12,
    );
}

#[test]
fn smooth_examples() {
    let s = 0.9;
    let g = smooth(&parse("x1^2 + sin(x1)").unwrap(), sig(s));
    for x in [-1.0f64, 0.5, 2.0] {
        close(
            g.eval(&[x]).unwrap(),
            s * s + x * x + (-s * s / 2.0).exp() * x.sin(),
            1e-14,
        );
    }
    assert!(smooth(&Expression::zero(3), sig(1.0)).is_empty());
}

#[test]
fn gradient_examples() {
    assert_eq!(
        gradient(&parse("x1^2").unwrap(), &[3.0]).unwrap(),
        vec![6.0]
    );
    let e = smooth(&parse("relu(2*x1 - x2)").unwrap(), sig(0.5));
    let g = gradient(&e, &[1.0, 2.0]).unwrap();
    close(g[0], 1.0, 1e-15);
    close(g[1], -0.5, 1e-15);
}

#[test]
fn kernel_examples() {
    let k = GaussianKernel::new(1.0, 1).unwrap();
    close(k.eval(&[0.0]).unwrap(), 0.398_942_280_4, 1e-10);
    let k = GaussianKernel::new(2.0, 2).unwrap();
    close(k.eval(&[0.0, 0.0]).unwrap(), 1.0 / (8.0 * PI), 1e-17);

    // mass: integrate k against the Lebesgue measure by importance sampling
    // with a wider normal density on the tensor Gauss-Hermite grid
    let gh = GaussHermite::new(32);
    let (nodes, weights) = (gh.nodes(), gh.weights());
    for n in 1..=3usize {
        let (sigma, wide) = (0.8, 1.0);
        let k = GaussianKernel::new(sigma, n).unwrap();
        let mut mass = 0.0;
        for flat in 0..nodes.len().pow(n as u32) {
            let (mut idx, mut w, mut density) = (flat, 1.0, 1.0);
            let mut x = vec![0.0; n];
            for xd in x.iter_mut() {
                let i = idx % nodes.len();
                idx /= nodes.len();
                *xd = wide * nodes[i];
                w *= weights[i];
                density *= (-nodes[i] * nodes[i] / 2.0).exp() / ((2.0 * PI).sqrt() * wide);
            }
            mass += w * k.eval(&x).unwrap() / density;
        }
        close(mass, 1.0, 1e-10);
    }

    let g1 = ScaledGaussian::new(1.0, vec![0.0], 1.0).unwrap();
    let p = gaussian_product(&g1, &g1).unwrap();
    close(p.prefactor, 1.0 / (2.0 * PI.sqrt()), 1e-16);
    assert_eq!(p.variance, 0.5);

    let a = affine_kernel_convolve(0.7, 1.0, 0.0, 0.4).unwrap();
    close(a.effective_sigma, 0.7f64.hypot(0.4), 1e-16);
    assert_eq!(
        affine_kernel_convolve(0.7, 0.0, 1.0, 0.4)
            .unwrap()
            .effective_sigma,
        0.7
    );
}

#[test]
fn parser_examples() {
    assert!(parse("").is_err());
    assert_eq!(print(&Expression::zero(2)), "0");
    assert_eq!(print(&parse("x1^2").unwrap()), "x1^2");
    let g = smooth(&parse("sin(x1)").unwrap(), sig(0.5));
    let text = print(&g);
    assert!(text.contains("exp(-0.125)"), "{text}");
    assert_eq!(parse(&text).unwrap(), g);
}
