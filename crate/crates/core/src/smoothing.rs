//! Closed-form Gaussian smoothing of expressions.
//!
//! Smoothing is linear, so [`smooth`] dispatches term by term:
//!
//! * a monomial `x^p` becomes `u(x, p, sigma) = E[(x + sigma Z)^p]`, built from
//!   the recurrence `u_p = x u_{p-1} + (p - 1) sigma^2 u_{p-2}`, and a
//!   multivariate monomial becomes the product of its per-axis factors;
//! * an RBF of width `delta` becomes an RBF of width `sqrt(delta^2 + sigma^2)`
//!   scaled by `(delta / sqrt(delta^2 + sigma^2))^n`;
//! * a harmonic `cos(k . x + phi)` is damped by `exp(-sigma^2 |k|^2 / 2)`;
//! * an activation of `w . x` is smoothed at scale `sigma |x|`, which for the
//!   term representation means composing `smoothed_sigma` with `sigma`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, Expression, LinearArgTerm, MonomialTerm, RbfTerm, Term, TrigTerm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothError {
    #[error("sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("p_max {p_max} exceeds the table limit of {limit}")]
    LimitExceeded { p_max: u32, limit: u32 },
    #[error("integer coefficients of row {row} overflow 64 bits")]
    Overflow { row: u32 },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Standard deviation of the smoothing kernel. Zero is the identity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothSigma(f64);

impl SmoothSigma {
    pub const ZERO: SmoothSigma = SmoothSigma(0.0);

    pub fn new(sigma: f64) -> Result<Self, SmoothError> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(Self(sigma + 0.0))
        } else {
            Err(SmoothError::InvalidSigma(sigma))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    /// Smoothing by `self` then by `other` equals smoothing once by the result.
    pub fn then(self, other: SmoothSigma) -> SmoothSigma {
        SmoothSigma(self.0.hypot(other.0))
    }
}

impl TryFrom<f64> for SmoothSigma {
    type Error = SmoothError;

    fn try_from(sigma: f64) -> Result<Self, SmoothError> {
        Self::new(sigma)
    }
}

impl From<SmoothSigma> for f64 {
    fn from(s: SmoothSigma) -> f64 {
        s.0
    }
}

/// Largest `p_max` accepted by [`monomial_table`].
pub const TABLE_LIMIT: u32 = 64;

/// One term `coeff * sigma^sigma_power * x^x_power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaMonomial {
    pub x_power: u32,
    pub sigma_power: u32,
    pub coeff: u64,
}

/// `u(x, p, sigma)` with exact integer coefficients, highest power of sigma
/// first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigmaPolynomial {
    pub p: u32,
    pub terms: Vec<SigmaMonomial>,
}

impl SigmaPolynomial {
    pub fn eval(&self, x: f64, sigma: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff as f64 * sigma.powi(t.sigma_power as i32) * x.powi(t.x_power as i32))
            .sum()
    }
}

impl fmt::Display for SigmaPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let power = |name: &str, k: u32| match k {
            0 => None,
            1 => Some(name.to_string()),
            _ => Some(format!("{name}^{k}")),
        };
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if t.coeff != 1 || (t.x_power == 0 && t.sigma_power == 0) {
                factors.push(t.coeff.to_string());
            }
            factors.extend(power("sigma", t.sigma_power));
            factors.extend(power("x", t.x_power));
            f.write_str(&factors.join("*"))?;
        }
        Ok(())
    }
}

/// Exact rows `u(x, p, sigma)` for `p = 0..=p_max`.
pub fn monomial_table(p_max: u32) -> Result<Vec<SigmaPolynomial>, SmoothError> {
    if p_max > TABLE_LIMIT {
        return Err(SmoothError::LimitExceeded {
            p_max,
            limit: TABLE_LIMIT,
        });
    }
    // rows[p][j] is the coefficient of x^j sigma^(p - j)
    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(p_max as usize + 1);
    for p in 0..=p_max as usize {
        let row = match p {
            0 => vec![1],
            1 => vec![0, 1],
            _ => {
                let mut row = vec![0u64; p + 1];
                for (j, &c) in rows[p - 1].iter().enumerate() {
                    row[j + 1] = c;
                }
                for (j, &c) in rows[p - 2].iter().enumerate() {
                    row[j] = c
                        .checked_mul(p as u64 - 1)
                        .and_then(|v| v.checked_add(row[j]))
                        .ok_or(SmoothError::Overflow { row: p as u32 })?;
                }
                row
            }
        };
        rows.push(row);
    }
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(p, row)| SigmaPolynomial {
            p: p as u32,
            terms: row
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0)
                .map(|(j, &c)| SigmaMonomial {
                    x_power: j as u32,
                    sigma_power: (p - j) as u32,
                    coeff: c,
                })
                .collect(),
        })
        .collect())
}

/// Coefficients of `u(x, p, sigma)` in powers of `x`, sigma substituted.
fn smoothed_power_coefficients(p: u32, sigma: f64) -> Vec<f64> {
    let s2 = sigma * sigma;
    let mut prev2: Vec<f64> = vec![1.0];
    if p == 0 {
        return prev2;
    }
    let mut prev1: Vec<f64> = vec![0.0, 1.0];
    for q in 2..=p as usize {
        let mut cur = vec![0.0; q + 1];
        for (j, &c) in prev1.iter().enumerate() {
            cur[j + 1] = c;
        }
        for (j, &c) in prev2.iter().enumerate() {
            cur[j] += (q - 1) as f64 * s2 * c;
        }
        prev2 = prev1;
        prev1 = cur;
    }
    prev1
}

/// `[x^p * k_sigma](x)` as a univariate expression.
pub fn smooth_monomial(p: u32, sigma: SmoothSigma) -> Expression {
    let terms = smoothed_power_coefficients(p, sigma.value())
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            Term::Monomial(MonomialTerm {
                coeff: c,
                exponents: vec![j as u32],
            })
        })
        .collect();
    Expression::assemble(1, terms)
}

fn require_family(e: &Expression, family: &'static str) -> Result<(), SmoothError> {
    require_family_or_constant(e, family, false)
}

fn require_family_or_constant(
    e: &Expression,
    family: &'static str,
    constants: bool,
) -> Result<(), SmoothError> {
    let constant = |t: &Term| matches!(t, Term::Monomial(m) if m.exponents.iter().all(|&k| k == 0));
    match e
        .terms()
        .iter()
        .find(|t| t.family() != family && !(constants && constant(t)))
    {
        Some(t) => Err(ExprError::FamilyViolation {
            expected: family,
            found: t.family(),
        }
        .into()),
        None => Ok(()),
    }
}

pub fn smooth_polynomial(e: &Expression, sigma: SmoothSigma) -> Result<Expression, SmoothError> {
    require_family(e, "monomial")?;
    Ok(smooth(e, sigma))
}

pub fn smooth_rbf(e: &Expression, sigma: SmoothSigma) -> Result<Expression, SmoothError> {
    require_family(e, "rbf")?;
    Ok(smooth(e, sigma))
}

/// Trigonometric polynomials may carry a constant term, which canonical form
/// stores as a monomial.
pub fn smooth_trig(e: &Expression, sigma: SmoothSigma) -> Result<Expression, SmoothError> {
    require_family_or_constant(e, "trig", true)?;
    Ok(smooth(e, sigma))
}

/// Composes the term's accumulated scale with `sigma`. A zero direction makes
/// the term a constant, which smoothing leaves alone.
pub fn smooth_linear_arg(t: &LinearArgTerm, sigma: SmoothSigma) -> LinearArgTerm {
    let mut out = t.clone();
    if t.direction.iter().any(|&v| v != 0.0) {
        out.smoothed_sigma = t.smoothed_sigma.hypot(sigma.value());
    }
    out
}

fn smooth_monomial_term(
    t: &MonomialTerm,
    sigma: f64,
    cache: &mut Vec<Option<Vec<f64>>>,
    out: &mut Vec<Term>,
) {
    // tensor product of the per-axis smoothed powers
    let mut partial: Vec<(f64, Vec<u32>)> = vec![(t.coeff, Vec::with_capacity(t.exponents.len()))];
    for &p in &t.exponents {
        let idx = p as usize;
        if cache.len() <= idx {
            cache.resize(idx + 1, None);
        }
        let coeffs = cache[idx].get_or_insert_with(|| smoothed_power_coefficients(p, sigma));
        let mut next = Vec::with_capacity(partial.len() * (idx / 2 + 1));
        for (c, exps) in &partial {
            for (j, &cj) in coeffs.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                let mut e = exps.clone();
                e.push(j as u32);
                next.push((c * cj, e));
            }
        }
        partial = next;
    }
    out.extend(
        partial
            .into_iter()
            .map(|(coeff, exponents)| Term::Monomial(MonomialTerm { coeff, exponents })),
    );
}

/// The Weierstrass transform of `e` at scale `sigma`.
pub fn smooth(e: &Expression, sigma: SmoothSigma) -> Expression {
    if sigma.is_zero() {
        return e.canonicalize();
    }
    let s = sigma.value();
    let n = e.dimension();
    let mut cache = Vec::new();
    let mut out = Vec::with_capacity(e.len());
    for term in e.terms() {
        match term {
            Term::Monomial(t) => smooth_monomial_term(t, s, &mut cache, &mut out),
            Term::Rbf(t) => {
                let width = t.width.hypot(s);
                out.push(Term::Rbf(RbfTerm {
                    amp: t.amp * (t.width / width).powi(n as i32),
                    center: t.center.clone(),
                    width,
                }));
            }
            Term::Trig(t) => {
                let k2: f64 = t.freqs.iter().map(|&k| (k as f64) * (k as f64)).sum();
                out.push(Term::Trig(TrigTerm {
                    damping: t.damping + 0.5 * s * s * k2,
                    ..t.clone()
                }));
            }
            Term::LinearArg(t) => out.push(Term::LinearArg(smooth_linear_arg(t, sigma))),
        }
    }
    Expression::assemble(n, out)
}

/// Analytic gradient of `e` at `p`.
pub fn gradient(e: &Expression, p: &[f64]) -> Result<Vec<f64>, ExprError> {
    e.gradient(p)
}

/// Smoothed forms `f~(y; s)` of the supported activations.
pub mod activation {
    use std::f64::consts::{PI, SQRT_2};

    use statrs::function::erf::{erf, erfc};

    use crate::expr::Activation;

    /// `f~(y; s)`; `s = 0` gives the activation itself, with `sign(0) = 0`.
    pub fn value(act: Activation, y: f64, s: f64) -> f64 {
        match act {
            Activation::Sign => {
                if s == 0.0 {
                    if y == 0.0 {
                        0.0
                    } else {
                        y.signum()
                    }
                } else {
                    erf(y / (SQRT_2 * s))
                }
            }
            Activation::Relu => {
                if s == 0.0 {
                    y.max(0.0)
                } else {
                    s / (2.0 * PI).sqrt() * (-y * y / (2.0 * s * s)).exp()
                        + 0.5 * y * erfc(-y / (SQRT_2 * s))
                }
            }
            Activation::Sin => (-0.5 * s * s).exp() * y.sin(),
        }
    }

    /// `d f~(y; s) / dy`. At `s = 0` the kink of relu takes the midpoint
    /// slope and sign has slope zero.
    pub fn derivative(act: Activation, y: f64, s: f64) -> f64 {
        match act {
            Activation::Sign => {
                if s == 0.0 {
                    0.0
                } else {
                    (2.0 / PI).sqrt() / s * (-y * y / (2.0 * s * s)).exp()
                }
            }
            Activation::Relu => {
                if s == 0.0 {
                    if y > 0.0 {
                        1.0
                    } else if y < 0.0 {
                        0.0
                    } else {
                        0.5
                    }
                } else {
                    0.5 * erfc(-y / (SQRT_2 * s))
                }
            }
            Activation::Sin => (-0.5 * s * s).exp() * y.cos(),
        }
    }
}
