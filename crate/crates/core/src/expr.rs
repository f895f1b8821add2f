//! Expression model shared by every other module.
//!
//! An [`Expression`] is a finite sum of typed terms over positional variables
//! `x1..xn`. Expressions built through [`Expression::new`] and every operation
//! that returns one are canonical: terms sorted by family then by a
//! family-specific key, duplicates merged, negligible coefficients dropped.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smoothing::activation;

/// Merged coefficients smaller than this in magnitude are dropped.
pub const MERGE_TOLERANCE: f64 = 1e-15;

/// Phases within this distance of a multiple of pi/2 are snapped onto it.
const PHASE_SNAP: f64 = 1e-12;

/// Default bound on the exponent accepted by [`Expression::expand_power`].
pub const DEFAULT_POWER_LIMIT: u32 = 8;

/// Upper bound on the number of terms an expansion may produce.
pub const MAX_TERMS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("unsupported product: {0}")]
    UnsupportedProduct(String),
    #[error("power {exponent} exceeds the limit of {limit}")]
    PowerLimit { exponent: u32, limit: u32 },
    #[error("expression too large: more than {limit} terms")]
    TooLarge { limit: usize },
    #[error("expected only {expected} terms, found a {found} term")]
    FamilyViolation {
        expected: &'static str,
        found: &'static str,
    },
    #[error("point coordinates must be finite")]
    NonFinitePoint,
}

/// Activation applied to a linear argument `w . direction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sign,
    Relu,
    Sin,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sign => "sign",
            Activation::Relu => "relu",
            Activation::Sin => "sin",
        }
    }

    /// Sign and relu are not smooth at the origin until they have been smoothed.
    pub fn is_nonsmooth(self) -> bool {
        matches!(self, Activation::Sign | Activation::Relu)
    }
}

/// `coeff * prod_d x_d^exponents[d]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// `amp * exp(-|x - center|^2 / (2 width^2))`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfTerm {
    pub amp: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

/// `coeff * exp(-damping) * prod_d cos(freqs[d] x_d + phases[d])`
///
/// `sin(k x)` is stored as `cos(k x - pi/2)`. In canonical form every
/// frequency is non-negative, axes with zero frequency carry a zero phase and
/// the remaining phases lie in `[0, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coeff: f64,
    pub freqs: Vec<i64>,
    pub phases: Vec<f64>,
    pub damping: f64,
}

/// `coeff * f~(w . direction; smoothed_sigma * |direction|)` where `f~(.; s)`
/// is the activation smoothed at scale `s` and `f~(.; 0) = f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArgTerm {
    pub coeff: f64,
    pub activation: Activation,
    pub direction: Vec<f64>,
    pub smoothed_sigma: f64,
}

impl LinearArgTerm {
    /// Scale of the one-dimensional smoothed activation seen by this term.
    pub fn effective_sigma(&self) -> f64 {
        self.smoothed_sigma * norm(&self.direction)
    }

    pub fn argument(&self, w: &[f64]) -> f64 {
        dot(w, &self.direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Term {
    Monomial(MonomialTerm),
    Rbf(RbfTerm),
    Trig(TrigTerm),
    LinearArg(LinearArgTerm),
}

impl Term {
    pub fn family(&self) -> &'static str {
        match self {
            Term::Monomial(_) => "monomial",
            Term::Rbf(_) => "rbf",
            Term::Trig(_) => "trig",
            Term::LinearArg(_) => "linear_arg",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Term::Monomial(_) => 0,
            Term::Rbf(_) => 1,
            Term::Trig(_) => 2,
            Term::LinearArg(_) => 3,
        }
    }

    /// The multiplicative coefficient (the amplitude for RBF terms).
    pub fn coeff(&self) -> f64 {
        match self {
            Term::Monomial(t) => t.coeff,
            Term::Rbf(t) => t.amp,
            Term::Trig(t) => t.coeff,
            Term::LinearArg(t) => t.coeff,
        }
    }

    fn coeff_mut(&mut self) -> &mut f64 {
        match self {
            Term::Monomial(t) => &mut t.coeff,
            Term::Rbf(t) => &mut t.amp,
            Term::Trig(t) => &mut t.coeff,
            Term::LinearArg(t) => &mut t.coeff,
        }
    }

    fn scaled(mut self, c: f64) -> Term {
        *self.coeff_mut() *= c;
        self
    }

    fn is_constant(&self) -> bool {
        matches!(self, Term::Monomial(m) if m.exponents.iter().all(|&p| p == 0))
    }

    fn validate(&self, n: usize) -> Result<(), ExprError> {
        let check_len = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(ExprError::Dimension {
                    expected: n,
                    found: len,
                })
            }
        };
        let finite = |what: &str, xs: &[f64]| {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(ExprError::InvalidTerm(format!("{what} must be finite")))
            }
        };
        finite("coefficient", &[self.coeff()])?;
        match self {
            Term::Monomial(t) => check_len(t.exponents.len()),
            Term::Rbf(t) => {
                check_len(t.center.len())?;
                finite("rbf center", &t.center)?;
                if !(t.width > 0.0 && t.width.is_finite()) {
                    return Err(ExprError::InvalidTerm(format!(
                        "rbf width must be positive, got {}",
                        t.width
                    )));
                }
                Ok(())
            }
            Term::Trig(t) => {
                check_len(t.freqs.len())?;
                check_len(t.phases.len())?;
                finite("trig phase", &t.phases)?;
                if !(t.damping >= 0.0 && t.damping.is_finite()) {
                    return Err(ExprError::InvalidTerm(format!(
                        "trig damping must be non-negative, got {}",
                        t.damping
                    )));
                }
                Ok(())
            }
            Term::LinearArg(t) => {
                check_len(t.direction.len())?;
                finite("direction", &t.direction)?;
                if !(t.smoothed_sigma >= 0.0 && t.smoothed_sigma.is_finite()) {
                    return Err(ExprError::InvalidTerm(format!(
                        "smoothed_sigma must be non-negative, got {}",
                        t.smoothed_sigma
                    )));
                }
                Ok(())
            }
        }
    }

    /// Value of the term at `x`. The caller guarantees `x.len()` matches.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Term::Monomial(t) => t.coeff * monomial_product(&t.exponents, x),
            Term::Rbf(t) => t.amp * (-dist2(x, &t.center) / (2.0 * t.width * t.width)).exp(),
            Term::Trig(t) => {
                let mut v = t.coeff * (-t.damping).exp();
                for ((&k, &phi), &xd) in t.freqs.iter().zip(&t.phases).zip(x) {
                    v *= (k as f64 * xd + phi).cos();
                }
                v
            }
            Term::LinearArg(t) => {
                t.coeff * activation::value(t.activation, t.argument(x), t.effective_sigma())
            }
        }
    }

    /// Adds the gradient of the term at `x` into `out`.
    pub fn add_gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Term::Monomial(t) => {
                for d in 0..x.len() {
                    let p = t.exponents[d];
                    if p == 0 {
                        continue;
                    }
                    let mut g = t.coeff * p as f64 * x[d].powi(p as i32 - 1);
                    for (e, (&q, &xe)) in t.exponents.iter().zip(x).enumerate() {
                        if e != d && q != 0 {
                            g *= xe.powi(q as i32);
                        }
                    }
                    out[d] += g;
                }
            }
            Term::Rbf(t) => {
                let w2 = t.width * t.width;
                let v = t.amp * (-dist2(x, &t.center) / (2.0 * w2)).exp();
                for d in 0..x.len() {
                    out[d] -= v * (x[d] - t.center[d]) / w2;
                }
            }
            Term::Trig(t) => {
                let scale = t.coeff * (-t.damping).exp();
                let cosines: Vec<f64> = t
                    .freqs
                    .iter()
                    .zip(&t.phases)
                    .zip(x)
                    .map(|((&k, &phi), &xd)| (k as f64 * xd + phi).cos())
                    .collect();
                for d in 0..x.len() {
                    let k = t.freqs[d];
                    if k == 0 {
                        continue;
                    }
                    let mut g = -scale * k as f64 * (k as f64 * x[d] + t.phases[d]).sin();
                    for (e, c) in cosines.iter().enumerate() {
                        if e != d {
                            g *= c;
                        }
                    }
                    out[d] += g;
                }
            }
            Term::LinearArg(t) => {
                let slope = t.coeff
                    * activation::derivative(t.activation, t.argument(x), t.effective_sigma());
                for (o, &v) in out.iter_mut().zip(&t.direction) {
                    *o += slope * v;
                }
            }
        }
    }

    /// Rewrites the term into its canonical representative. Returns `None`
    /// when the term's value is identically zero.
    fn normalized(self) -> Option<Term> {
        let term = match self {
            Term::Monomial(t) => Term::Monomial(t),
            Term::Rbf(mut t) => {
                clear_negative_zeros(&mut t.center);
                Term::Rbf(t)
            }
            Term::Trig(mut t) => {
                for d in 0..t.freqs.len() {
                    let (k, phi, sign) = normalize_harmonic(t.freqs[d], t.phases[d]);
                    t.freqs[d] = k;
                    t.phases[d] = phi;
                    t.coeff *= sign;
                }
                t.damping += 0.0;
                if t.freqs.iter().all(|&k| k == 0) {
                    Term::Monomial(MonomialTerm {
                        coeff: t.coeff * (-t.damping).exp(),
                        exponents: vec![0; t.freqs.len()],
                    })
                } else {
                    Term::Trig(t)
                }
            }
            Term::LinearArg(mut t) => {
                clear_negative_zeros(&mut t.direction);
                t.smoothed_sigma += 0.0;
                Term::LinearArg(t)
            }
        };
        (term.coeff() != 0.0).then_some(term)
    }
}

fn clear_negative_zeros(xs: &mut [f64]) {
    for x in xs {
        *x += 0.0;
    }
}

fn snap_phase(p: f64) -> f64 {
    const STOPS: [f64; 5] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2, TAU];
    STOPS
        .into_iter()
        .find(|s| (p - s).abs() <= PHASE_SNAP)
        .unwrap_or(p)
}

/// `cos` that is exact on the snapped multiples of pi/2.
fn exact_cos(p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == FRAC_PI_2 || p == 3.0 * FRAC_PI_2 {
        0.0
    } else if p == PI {
        -1.0
    } else {
        p.cos()
    }
}

/// Canonical `(k, phase, sign)` with `sign * cos(k x + phase)` equal to the
/// input harmonic `cos(freq x + phase)`. A zero frequency folds the constant
/// `cos(phase)` into `sign`.
fn normalize_harmonic(freq: i64, phase: f64) -> (i64, f64, f64) {
    let (k, raw) = if freq < 0 {
        (-freq, -phase)
    } else {
        (freq, phase)
    };
    let mut p = snap_phase(raw.rem_euclid(TAU));
    if p >= TAU {
        p = 0.0;
    }
    if k == 0 {
        return (0, 0.0, exact_cos(p));
    }
    let mut sign = 1.0;
    if p >= PI {
        p = snap_phase(p - PI);
        sign = -1.0;
    }
    (k, p + 0.0, sign)
}

fn cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Ordering on the structural key of a term, ignoring its coefficient.
fn key_cmp(a: &Term, b: &Term) -> Ordering {
    match (a, b) {
        (Term::Monomial(x), Term::Monomial(y)) => x.exponents.cmp(&y.exponents),
        (Term::Rbf(x), Term::Rbf(y)) => {
            cmp_slices(&x.center, &y.center).then(x.width.total_cmp(&y.width))
        }
        (Term::Trig(x), Term::Trig(y)) => x
            .freqs
            .cmp(&y.freqs)
            .then_with(|| cmp_slices(&x.phases, &y.phases))
            .then(x.damping.total_cmp(&y.damping)),
        (Term::LinearArg(x), Term::LinearArg(y)) => x
            .activation
            .cmp(&y.activation)
            .then_with(|| cmp_slices(&x.direction, &y.direction))
            .then(x.smoothed_sigma.total_cmp(&y.smoothed_sigma)),
        _ => a.rank().cmp(&b.rank()),
    }
}

pub(crate) fn monomial_product(exponents: &[u32], x: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(x)
        .filter(|(&p, _)| p != 0)
        .map(|(&p, &xd)| xd.powi(p as i32))
        .product()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A point with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvalPoint(Vec<f64>);

impl EvalPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, ExprError> {
        if coords.iter().all(|x| x.is_finite()) {
            Ok(Self(coords))
        } else {
            Err(ExprError::NonFinitePoint)
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for EvalPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for EvalPoint {
    type Error = ExprError;

    fn try_from(coords: Vec<f64>) -> Result<Self, ExprError> {
        Self::new(coords)
    }
}

impl From<EvalPoint> for Vec<f64> {
    fn from(p: EvalPoint) -> Vec<f64> {
        p.0
    }
}

/// A canonical sum of terms over `dimension` positional variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExpression")]
pub struct Expression {
    dimension: usize,
    terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawExpression {
    dimension: usize,
    terms: Vec<Term>,
}

impl TryFrom<RawExpression> for Expression {
    type Error = ExprError;

    fn try_from(raw: RawExpression) -> Result<Self, ExprError> {
        Expression::new(raw.dimension, raw.terms)
    }
}

impl Expression {
    /// Validates and canonicalizes `terms`.
    pub fn new(dimension: usize, terms: Vec<Term>) -> Result<Self, ExprError> {
        Ok(Self::uncanonical(dimension, terms)?.canonicalize())
    }

    /// Validates `terms` but keeps them in the given order, unmerged. Useful
    /// for exercising [`Expression::canonicalize`]; every other operation
    /// returns canonical expressions.
    pub fn uncanonical(dimension: usize, terms: Vec<Term>) -> Result<Self, ExprError> {
        if dimension == 0 {
            return Err(ExprError::InvalidTerm("dimension must be positive".into()));
        }
        for t in &terms {
            t.validate(dimension)?;
        }
        Ok(Self { dimension, terms })
    }

    /// # Panics
    ///
    /// Panics if `dimension == 0`.
    pub fn zero(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            terms: Vec::new(),
        }
    }

    /// # Panics
    ///
    /// Panics if `dimension == 0` or `value` is not finite.
    pub fn constant(dimension: usize, value: f64) -> Self {
        assert!(value.is_finite(), "constant must be finite");
        Self::monomial(dimension, value, vec![0; dimension])
    }

    /// The coordinate `x_{index + 1}`.
    ///
    /// # Panics
    ///
    /// Panics if `index >= dimension`.
    pub fn variable(dimension: usize, index: usize) -> Self {
        assert!(index < dimension, "variable index out of range");
        let mut exponents = vec![0; dimension];
        exponents[index] = 1;
        Self::monomial(dimension, 1.0, exponents)
    }

    fn monomial(dimension: usize, coeff: f64, exponents: Vec<u32>) -> Self {
        let mut e = Self::zero(dimension);
        if coeff != 0.0 {
            e.terms
                .push(Term::Monomial(MonomialTerm { coeff, exponents }));
        }
        e
    }

    pub fn from_term(dimension: usize, term: Term) -> Result<Self, ExprError> {
        Self::new(dimension, vec![term])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every term belongs to `family` (see [`Term::family`]).
    pub fn only_family(&self, family: &str) -> bool {
        self.terms.iter().all(|t| t.family() == family)
    }

    /// True if some term is an unsmoothed sign or relu activation.
    pub fn has_nonsmooth_terms(&self) -> bool {
        self.terms
            .iter()
            .any(|t| matches!(t, Term::LinearArg(l) if l.activation.is_nonsmooth()))
    }

    /// Sorts, merges and prunes the terms. Idempotent.
    pub fn canonicalize(&self) -> Self {
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .cloned()
            .filter_map(Term::normalized)
            .collect();
        terms.sort_by(key_cmp);
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if key_cmp(last, &t) == Ordering::Equal => {
                    *last.coeff_mut() += t.coeff();
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff().abs() >= MERGE_TOLERANCE);
        Self {
            dimension: self.dimension,
            terms: merged,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.dimension {
            return Err(ExprError::Dimension {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_same_dimension(&self, other: &Expression) -> Result<(), ExprError> {
        if self.dimension != other.dimension {
            return Err(ExprError::Dimension {
                expected: self.dimension,
                found: other.dimension,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.check_point(x)?;
        Ok(self.terms.iter().map(|t| t.value(x)).sum())
    }

    /// Analytic gradient at `x`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.dimension];
        for t in &self.terms {
            t.add_gradient(x, &mut g);
        }
        Ok(g)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(&self, other: &Expression) -> Result<Expression, ExprError> {
        self.check_same_dimension(other)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            dimension: self.dimension,
            terms,
        }
        .canonicalize())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(&self, other: &Expression) -> Result<Expression, ExprError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Expression {
        Self {
            dimension: self.dimension,
            terms: self.terms.iter().cloned().map(|t| t.scaled(c)).collect(),
        }
        .canonicalize()
    }

    /// Multiplies by the constant `exp(c)`. Trig terms absorb the factor into
    /// their damping as long as the damping stays non-negative.
    pub fn apply_exp_factor(&self, c: f64) -> Expression {
        let terms = self
            .terms
            .iter()
            .cloned()
            .map(|t| match t {
                Term::Trig(mut tr) if tr.damping - c >= 0.0 => {
                    tr.damping -= c;
                    Term::Trig(tr)
                }
                other => other.scaled(c.exp()),
            })
            .collect();
        Self {
            dimension: self.dimension,
            terms,
        }
        .canonicalize()
    }

    /// Distributes the product over both sums. Trigonometric products are
    /// reduced to single harmonics with product-to-sum identities.
    pub fn expand_product(&self, other: &Expression) -> Result<Expression, ExprError> {
        self.check_same_dimension(other)?;
        let mut out = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                multiply_terms(a, b, &mut out)?;
                if out.len() > 4 * MAX_TERMS {
                    return Err(ExprError::TooLarge { limit: MAX_TERMS });
                }
            }
        }
        let e = Self {
            dimension: self.dimension,
            terms: out,
        }
        .canonicalize();
        if e.len() > MAX_TERMS {
            return Err(ExprError::TooLarge { limit: MAX_TERMS });
        }
        Ok(e)
    }

    /// `self^k` with the default power limit.
    pub fn expand_power(&self, k: u32) -> Result<Expression, ExprError> {
        self.expand_power_with_limit(k, DEFAULT_POWER_LIMIT)
    }

    pub fn expand_power_with_limit(&self, k: u32, limit: u32) -> Result<Expression, ExprError> {
        if k > limit {
            return Err(ExprError::PowerLimit { exponent: k, limit });
        }
        let mut acc = Self::constant(self.dimension, 1.0);
        for _ in 0..k {
            acc = acc.expand_product(self)?;
        }
        Ok(acc)
    }

    /// Structural equality with real-valued fields compared to within
    /// `tol * max(1, |a|, |b|)`.
    pub fn approx_eq(&self, other: &Expression, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs());
        let all_close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| close(x, y))
        };
        self.dimension == other.dimension
            && self.terms.len() == other.terms.len()
            && self
                .terms
                .iter()
                .zip(&other.terms)
                .all(|(a, b)| match (a, b) {
                    (Term::Monomial(x), Term::Monomial(y)) => {
                        x.exponents == y.exponents && close(x.coeff, y.coeff)
                    }
                    (Term::Rbf(x), Term::Rbf(y)) => {
                        close(x.amp, y.amp)
                            && all_close(&x.center, &y.center)
                            && close(x.width, y.width)
                    }
                    (Term::Trig(x), Term::Trig(y)) => {
                        x.freqs == y.freqs
                            && close(x.coeff, y.coeff)
                            && all_close(&x.phases, &y.phases)
                            && close(x.damping, y.damping)
                    }
                    (Term::LinearArg(x), Term::LinearArg(y)) => {
                        x.activation == y.activation
                            && close(x.coeff, y.coeff)
                            && all_close(&x.direction, &y.direction)
                            && close(x.smoothed_sigma, y.smoothed_sigma)
                    }
                    _ => false,
                })
    }

    /// Builds from terms already known to be valid for `dimension`.
    pub(crate) fn assemble(dimension: usize, terms: Vec<Term>) -> Self {
        Self { dimension, terms }.canonicalize()
    }
}

fn multiply_terms(a: &Term, b: &Term, out: &mut Vec<Term>) -> Result<(), ExprError> {
    if a.is_constant() {
        out.push(b.clone().scaled(a.coeff()));
        return Ok(());
    }
    if b.is_constant() {
        out.push(a.clone().scaled(b.coeff()));
        return Ok(());
    }
    match (a, b) {
        (Term::Monomial(x), Term::Monomial(y)) => {
            let exponents = x
                .exponents
                .iter()
                .zip(&y.exponents)
                .map(|(p, q)| p.checked_add(*q))
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| ExprError::InvalidTerm("exponent overflow".into()))?;
            out.push(Term::Monomial(MonomialTerm {
                coeff: x.coeff * y.coeff,
                exponents,
            }));
            Ok(())
        }
        (Term::Trig(x), Term::Trig(y)) => {
            multiply_trig(x, y, out);
            Ok(())
        }
        (Term::Monomial(m), Term::Trig(t)) | (Term::Trig(t), Term::Monomial(m)) => {
            let shared = m
                .exponents
                .iter()
                .zip(&t.freqs)
                .position(|(&p, &k)| p != 0 && k != 0);
            Err(ExprError::UnsupportedProduct(match shared {
                Some(d) => format!(
                    "polynomial and trigonometric factors in the same variable x{}",
                    d + 1
                ),
                None => "a polynomial times a trigonometric factor has no closed-form term".into(),
            }))
        }
        _ => Err(ExprError::UnsupportedProduct(format!(
            "products involving {} and {} terms are not supported",
            a.family(),
            b.family()
        ))),
    }
}

/// `cos a cos b = (cos(a - b) + cos(a + b)) / 2`, applied axis by axis.
fn multiply_trig(x: &TrigTerm, y: &TrigTerm, out: &mut Vec<Term>) {
    let n = x.freqs.len();
    let mut partial: Vec<(f64, Vec<i64>, Vec<f64>)> = vec![(
        x.coeff * y.coeff,
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    )];
    for d in 0..n {
        let (k1, p1) = (x.freqs[d], x.phases[d]);
        let (k2, p2) = (y.freqs[d], y.phases[d]);
        let one1 = k1 == 0 && p1 == 0.0;
        let one2 = k2 == 0 && p2 == 0.0;
        if one1 || one2 {
            let (k, p) = if one1 { (k2, p2) } else { (k1, p1) };
            for (_, ks, ps) in partial.iter_mut() {
                ks.push(k);
                ps.push(p);
            }
            continue;
        }
        let mut next = Vec::with_capacity(2 * partial.len());
        for (c, ks, ps) in partial {
            let mut diff = (0.5 * c, ks.clone(), ps.clone());
            diff.1.push(k1 - k2);
            diff.2.push(p1 - p2);
            let mut sum = (0.5 * c, ks, ps);
            sum.1.push(k1 + k2);
            sum.2.push(p1 + p2);
            next.push(diff);
            next.push(sum);
        }
        partial = next;
    }
    let damping = x.damping + y.damping;
    out.extend(partial.into_iter().map(|(coeff, freqs, phases)| {
        Term::Trig(TrigTerm {
            coeff,
            freqs,
            phases,
            damping,
        })
    }));
}
