//! Graduated optimization: descend the closed-form smoothed surrogate at each
//! scale of a decreasing schedule, warm-starting every stage from the previous
//! result and finishing on the original objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{norm, Expression};
use crate::par;
use crate::smoothing::{smooth, SmoothSigma};

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const INITIAL_STEP: f64 = 1.0;
const MAX_BACKTRACKS: usize = 60;
const DIVERGENCE_RADIUS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HomotopyError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("tolerance must be positive and finite, got {0}")]
    Tolerance(f64),
    #[error("max_iter must be positive")]
    MaxIter,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("starting point must be finite")]
    NonFiniteStart,
    #[error("objective became non-finite; last finite iterate {last:?}")]
    NonFinite { last: Vec<f64> },
    #[error("iterate left the ball of radius 1e6; last iterate {last:?}")]
    Diverged { last: Vec<f64> },
}

/// Strictly decreasing smoothing scales, always ending with the exact stage 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Schedule {
    sigmas: Vec<f64>,
}

impl Schedule {
    pub const DEFAULT_SIGMA_MAX: f64 = 2.0;
    pub const DEFAULT_SIGMA_MIN: f64 = 0.01;
    pub const DEFAULT_STEPS: usize = 8;

    /// Accepts a strictly decreasing list of non-negative scales; a final
    /// `0` is appended when the list ends above it.
    pub fn new(mut sigmas: Vec<f64>) -> Result<Self, HomotopyError> {
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(HomotopyError::Schedule(
                "scales must be finite and non-negative".into(),
            ));
        }
        if sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(HomotopyError::Schedule(
                "scales must strictly decrease".into(),
            ));
        }
        if sigmas.last() != Some(&0.0) {
            sigmas.push(0.0);
        }
        Ok(Self { sigmas })
    }

    /// `steps` geometrically spaced scales from `sigma_max` down to
    /// `sigma_min`, followed by 0.
    pub fn geometric(sigma_max: f64, sigma_min: f64, steps: usize) -> Result<Self, HomotopyError> {
        if !(sigma_min > 0.0 && sigma_max.is_finite() && sigma_max > 0.0) {
            return Err(HomotopyError::Schedule(
                "geometric schedules need 0 < sigma_min and finite sigma_max".into(),
            ));
        }
        let sigmas = match steps {
            0 => Vec::new(),
            1 => vec![sigma_max],
            _ => {
                if sigma_min >= sigma_max {
                    return Err(HomotopyError::Schedule(
                        "sigma_max must exceed sigma_min".into(),
                    ));
                }
                let ratio = (sigma_min / sigma_max).powf(1.0 / (steps - 1) as f64);
                let mut s: Vec<f64> = (0..steps)
                    .map(|i| sigma_max * ratio.powi(i as i32))
                    .collect();
                s[steps - 1] = sigma_min;
                s
            }
        };
        Self::new(sigmas)
    }

    /// Only the final exact stage.
    pub fn exact_only() -> Self {
        Self { sigmas: vec![0.0] }
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::geometric(
            Self::DEFAULT_SIGMA_MAX,
            Self::DEFAULT_SIGMA_MIN,
            Self::DEFAULT_STEPS,
        )
        .expect("default schedule is valid")
    }
}

impl TryFrom<Vec<f64>> for Schedule {
    type Error = HomotopyError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Schedule> for Vec<f64> {
    fn from(s: Schedule) -> Self {
        s.sigmas
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub sigma: f64,
    pub iterations: usize,
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective plus gradient evaluations.
    pub function_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    pub converged: bool,
    pub function_evaluations: usize,
    /// Why the solve stopped early, if a stage failed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

impl SolveReport {
    /// The point reached by the last completed stage.
    pub fn final_point(&self) -> Option<&[f64]> {
        self.stages.last().map(|s| s.point.as_slice())
    }
}

fn check_inputs(
    e: &Expression,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(), HomotopyError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(HomotopyError::Tolerance(tol));
    }
    if max_iter == 0 {
        return Err(HomotopyError::MaxIter);
    }
    if x0.len() != e.dimension() {
        return Err(HomotopyError::Dimension {
            expected: e.dimension(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(HomotopyError::NonFiniteStart);
    }
    Ok(())
}

/// Gradient descent with Armijo backtracking on `smooth(e, sigma)`.
pub fn minimize_stage(
    e: &Expression,
    sigma: SmoothSigma,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<StageReport, HomotopyError> {
    check_inputs(e, x0, tol, max_iter)?;
    let g = smooth(e, sigma);
    descend(&g, sigma.value(), x0, tol, max_iter)
}

fn descend(
    g: &Expression,
    sigma: f64,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<StageReport, HomotopyError> {
    let value = |x: &[f64]| g.eval(x).expect("dimension checked");
    let grad = |x: &[f64]| g.gradient(x).expect("dimension checked");

    let mut x = x0.to_vec();
    let mut fx = value(&x);
    let mut gx = grad(&x);
    let mut evals = 2;
    if !fx.is_finite() || gx.iter().any(|v| !v.is_finite()) {
        return Err(HomotopyError::NonFinite { last: x });
    }
    let mut gnorm = norm(&gx);
    let mut iterations = 0;
    let mut trial = vec![0.0; x.len()];
    while gnorm > tol && iterations < max_iter {
        let slope = gnorm * gnorm;
        let mut step = INITIAL_STEP;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&gx) {
                *t = xi - step * gi;
            }
            let ft = value(&trial);
            evals += 1;
            if ft.is_finite() && ft <= fx - ARMIJO_C * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= SHRINK;
        }
        let Some(ft) = accepted else {
            break;
        };
        if norm(&trial) > DIVERGENCE_RADIUS {
            return Err(HomotopyError::Diverged { last: trial });
        }
        std::mem::swap(&mut x, &mut trial);
        fx = ft;
        gx = grad(&x);
        evals += 1;
        if gx.iter().any(|v| !v.is_finite()) {
            return Err(HomotopyError::NonFinite { last: x });
        }
        gnorm = norm(&gx);
        iterations += 1;
    }
    Ok(StageReport {
        sigma,
        iterations,
        point: x,
        value: fx,
        gradient_norm: gnorm,
        converged: gnorm <= tol,
        function_evaluations: evals,
    })
}

/// Runs [`minimize_stage`] for every scale of `sched`, each stage starting
/// where the previous one stopped. `converged` reflects the final exact
/// stage; a failing stage ends the solve and is recorded in `failure`.
pub fn minimize_homotopy(
    e: &Expression,
    sched: &Schedule,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport, HomotopyError> {
    check_inputs(e, x0, tol, max_iter)?;
    let mut stages: Vec<StageReport> = Vec::with_capacity(sched.sigmas.len());
    let mut failure = None;
    for &s in &sched.sigmas {
        let start = stages.last().map_or(x0, |st| st.point.as_slice());
        let sigma = SmoothSigma::new(s).expect("schedule scales are valid");
        let g = smooth(e, sigma);
        match descend(&g, s, start, tol, max_iter) {
            Ok(report) => stages.push(report),
            Err(err) => {
                failure = Some(format!("stage sigma={s}: {err}"));
                break;
            }
        }
    }
    let function_evaluations = stages.iter().map(|s| s.function_evaluations).sum();
    let converged = failure.is_none() && stages.last().is_some_and(|s| s.converged);
    Ok(SolveReport {
        stages,
        converged,
        function_evaluations,
        failure,
    })
}

/// Smallest value of `e` on a regular grid with `points_per_axis` nodes per
/// axis over the box `bounds`; ties go to the first grid point in row-major
/// order.
pub fn grid_minimum(
    e: &Expression,
    bounds: &[(f64, f64)],
    points_per_axis: usize,
    parallel: bool,
) -> Result<(Vec<f64>, f64), HomotopyError> {
    if bounds.len() != e.dimension() {
        return Err(HomotopyError::Dimension {
            expected: e.dimension(),
            found: bounds.len(),
        });
    }
    if points_per_axis < 2 {
        return Err(HomotopyError::Schedule(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    let n = bounds.len();
    let total = points_per_axis.pow(n as u32);
    let coord = |d: usize, i: usize| {
        let (lo, hi) = bounds[d];
        lo + (hi - lo) * i as f64 / (points_per_axis - 1) as f64
    };
    let point_at = |mut idx: usize| {
        let mut p = vec![0.0; n];
        for d in (0..n).rev() {
            p[d] = coord(d, idx % points_per_axis);
            idx /= points_per_axis;
        }
        p
    };
    let values = par::map_range(total, parallel, |i| {
        e.eval(&point_at(i)).expect("dimension checked")
    });
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] || values[best].is_nan() {
            best = i;
        }
    }
    Ok((point_at(best), values[best]))
}
