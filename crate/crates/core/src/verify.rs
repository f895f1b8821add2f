//! Cross-checks a closed form against the numerical oracle at a set of points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::oracle::{oracle_convolve, OracleConfig, OracleError};
use crate::par;
use crate::smoothing::{smooth, SmoothSigma};

pub const SMOOTH_TOLERANCE: f64 = 1e-8;
pub const NONSMOOTH_TOLERANCE: f64 = 1e-6;

/// Sample points are drawn uniformly from `[-RANGE, RANGE]^n`.
pub const RANGE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("verification requires sigma > 0, got {0}")]
    InvalidSigma(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub point: Vec<f64>,
    pub closed_form: f64,
    pub oracle: f64,
    pub error_estimate: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub sigma: f64,
    pub tolerance: f64,
    pub points: Vec<PointReport>,
    pub max_abs_error: f64,
    pub pass: bool,
}

/// 1e-8, or 1e-6 when the expression has sign or relu terms.
pub fn default_tolerance(e: &Expression) -> f64 {
    if e.has_nonsmooth_terms() {
        NONSMOOTH_TOLERANCE
    } else {
        SMOOTH_TOLERANCE
    }
}

pub fn random_points(dimension: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..dimension)
                .map(|_| rng.random_range(-RANGE..RANGE))
                .collect()
        })
        .collect()
}

/// Compares `smooth(e, sigma)` with the oracle transform of `e`.
pub fn verify(
    e: &Expression,
    sigma: f64,
    points: &[Vec<f64>],
    tolerance: f64,
    cfg: &OracleConfig,
) -> Result<VerifyReport, VerifyError> {
    let s = SmoothSigma::new(sigma).map_err(|_| VerifyError::InvalidSigma(sigma))?;
    verify_against(&smooth(e, s), e, sigma, points, tolerance, cfg)
}

/// Compares an arbitrary candidate `closed` with the oracle transform of
/// `original`.
pub fn verify_against(
    closed: &Expression,
    original: &Expression,
    sigma: f64,
    points: &[Vec<f64>],
    tolerance: f64,
    cfg: &OracleConfig,
) -> Result<VerifyReport, VerifyError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(VerifyError::InvalidSigma(sigma));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(VerifyError::InvalidTolerance(tolerance));
    }
    if closed.dimension() != original.dimension() {
        return Err(ExprError::Dimension {
            expected: original.dimension(),
            found: closed.dimension(),
        }
        .into());
    }
    let results = par::map(
        points,
        cfg.parallel,
        |p| -> Result<PointReport, VerifyError> {
            let closed_form = closed.eval(p)?;
            let est = oracle_convolve(original, sigma, p, cfg)?;
            Ok(PointReport {
                point: p.clone(),
                closed_form,
                oracle: est.value,
                error_estimate: est.error_estimate,
                abs_error: (closed_form - est.value).abs(),
            })
        },
    );
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let max_abs_error =
        points
            .iter()
            .map(|p| p.abs_error)
            .fold(0.0, |a: f64, b| if b.is_nan() || b > a { b } else { a });
    Ok(VerifyReport {
        sigma,
        tolerance,
        pass: max_abs_error <= tolerance,
        points,
        max_abs_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    #[test]
    fn polynomial_passes() {
        let e = parse("x1^2*x2^3 + 0.1*(x1^4 + x2^4)").unwrap();
        let pts = random_points(2, 10, 7);
        let r = verify(
            &e,
            0.5,
            &pts,
            default_tolerance(&e),
            &OracleConfig::default(),
        )
        .unwrap();
        assert!(r.pass, "{}", r.max_abs_error);
        assert!(r.max_abs_error < 1e-12);
    }

    #[test]
    fn corrupted_closed_form_fails() {
        let e = parse("sin(x1)").unwrap();
        let wrong = e.clone();
        let pts = random_points(1, 5, 1);
        let r = verify_against(&wrong, &e, 0.5, &pts, 1e-8, &OracleConfig::default()).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn points_are_seeded() {
        assert_eq!(random_points(3, 4, 9), random_points(3, 4, 9));
        assert_ne!(random_points(3, 4, 9), random_points(3, 4, 10));
        assert!(random_points(2, 50, 0)
            .iter()
            .flatten()
            .all(|v| v.abs() <= RANGE));
    }

    #[test]
    fn tolerance_selection() {
        assert_eq!(default_tolerance(&parse("x1").unwrap()), 1e-8);
        assert_eq!(default_tolerance(&parse("relu(x1)").unwrap()), 1e-6);
        assert_eq!(default_tolerance(&parse("sin(0.5*x1)").unwrap()), 1e-8);
    }
}
