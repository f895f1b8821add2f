//! Numerical Weierstrass transform, used to check the closed forms.
//!
//! `[f * k_sigma](p) = E[f(p + sigma Z)]` with `Z` a standard normal vector.
//! In up to `max_quadrature_dim` dimensions the expectation is computed with
//! tensor-product Gauss-Hermite quadrature, term by term:
//!
//! * monomial, RBF and trig terms are products of univariate factors, so the
//!   tensor rule collapses to a product of one-dimensional sums. Narrow RBFs
//!   and high frequencies get a larger rule so the factor is resolved;
//! * unsmoothed sign / relu terms have a kink on the hyperplane
//!   `(p + sigma z) . direction = 0`. Along the axis where the direction is
//!   largest the integral is split at the kink and each side is integrated
//!   with Gauss-Legendre, and the remaining axes use Gauss-Hermite;
//! * everything else is evaluated on the full tensor grid.
//!
//! The error estimate is the difference between the estimate with the full
//! node count and with half of it. Above `max_quadrature_dim` a seeded Monte
//! Carlo mean is returned with its standard error.
//!
//! The univariate activations are evaluated directly here rather than through
//! the closed-form module.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Activation, Expression, LinearArgTerm, Term};
use crate::par;
use crate::quadrature::{GaussHermite, GaussLegendre};

/// Half-width, in standard deviations, of the truncated domain used on the
/// kinked axis. The normal tail beyond it is below 1e-37.
const KINK_DOMAIN: f64 = 13.0;

const MC_CHUNKS: usize = 64;

/// A univariate factor varying on a length scale of `l` standard deviations
/// gets at least `RESOLUTION / l^2` Gauss-Hermite nodes, rounded up to a power
/// of two and capped at `MAX_FACTOR_NODES`.
const RESOLUTION: f64 = 16.0;
const MAX_FACTOR_NODES: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle requires sigma > 0, got {0}")]
    InvalidSigma(f64),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("integrand produced a non-finite value")]
    NonFinite,
    #[error("moment order {p} exceeds the limit of {limit}")]
    MomentLimit { p: u32, limit: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub quadrature_nodes: usize,
    /// Node count used for terms with a kink (unsmoothed sign and relu).
    pub nonsmooth_nodes: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub max_quadrature_dim: usize,
    /// Evaluate nodes on the rayon pool (ignored without the `parallel`
    /// feature). Results are identical either way.
    pub parallel: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: 64,
            nonsmooth_nodes: 200,
            mc_samples: 1_000_000,
            mc_seed: 42,
            max_quadrature_dim: 3,
            parallel: true,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.quadrature_nodes < 2 || self.nonsmooth_nodes < 2 {
            return Err(OracleError::Config(
                "quadrature node counts must be at least 2".into(),
            ));
        }
        if self.mc_samples < 1000 {
            return Err(OracleError::Config(
                "mc_samples must be at least 1000".into(),
            ));
        }
        if self.max_quadrature_dim == 0 {
            return Err(OracleError::Config(
                "max_quadrature_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub error_estimate: f64,
}

/// Largest moment order accepted by [`oracle_moment`].
pub const MOMENT_LIMIT: u32 = 64;

/// `E[(x + sigma Z)^p]` by Gauss-Hermite quadrature with enough nodes to be
/// exact.
pub fn oracle_moment(p: u32, x: f64, sigma: f64, cfg: &OracleConfig) -> Result<f64, OracleError> {
    if p > MOMENT_LIMIT {
        return Err(OracleError::MomentLimit {
            p,
            limit: MOMENT_LIMIT,
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(OracleError::InvalidSigma(sigma));
    }
    let nodes = cfg
        .quadrature_nodes
        .max((p as usize + 1).div_ceil(2))
        .max(1);
    let rule = GaussHermite::new(nodes);
    let v = rule.expectation(|z| (x + sigma * z).powi(p as i32));
    if v.is_finite() {
        Ok(v)
    } else {
        Err(OracleError::NonFinite)
    }
}

/// Numerical value of `[e * k_sigma](p)`.
pub fn oracle_convolve(
    e: &Expression,
    sigma: f64,
    p: &[f64],
    cfg: &OracleConfig,
) -> Result<OracleEstimate, OracleError> {
    cfg.validate()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(OracleError::InvalidSigma(sigma));
    }
    if p.len() != e.dimension() {
        return Err(OracleError::Dimension {
            expected: e.dimension(),
            found: p.len(),
        });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFinite);
    }
    let est = if e.dimension() > cfg.max_quadrature_dim {
        monte_carlo(e, sigma, p, cfg)
    } else {
        let full = Rules::new(cfg, 1);
        let half = Rules::new(cfg, 2);
        let value = quadrature(e, sigma, p, &full, cfg.parallel);
        let coarse = quadrature(e, sigma, p, &half, cfg.parallel);
        OracleEstimate {
            value,
            error_estimate: (value - coarse).abs(),
        }
    };
    if est.value.is_finite() && est.error_estimate.is_finite() {
        Ok(est)
    } else {
        Err(OracleError::NonFinite)
    }
}

struct Rules {
    smooth: Arc<GaussHermite>,
    kink: GaussLegendre,
    base: usize,
    divisor: usize,
}

impl Rules {
    /// The configured rules with every node count divided by `divisor`.
    fn new(cfg: &OracleConfig, divisor: usize) -> Self {
        Self {
            smooth: gauss_hermite(cfg.quadrature_nodes / divisor),
            kink: GaussLegendre::new((cfg.nonsmooth_nodes / 2 / divisor).max(1)),
            base: cfg.quadrature_nodes,
            divisor,
        }
    }

    /// Rule for a univariate factor with length scale `scale` (in standard
    /// deviations of `Z`).
    fn factor(&self, scale: f64) -> Arc<GaussHermite> {
        let need = RESOLUTION / (scale * scale);
        if need <= self.base as f64 {
            return self.smooth.clone();
        }
        let full = (need.min(MAX_FACTOR_NODES as f64).ceil() as usize)
            .next_power_of_two()
            .min(MAX_FACTOR_NODES)
            .max(self.base);
        gauss_hermite(full / self.divisor)
    }
}

fn gauss_hermite(n: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let n = n.max(1);
    let mut cache = CACHE
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(GaussHermite::new(n)))
        .clone()
}

fn quadrature(e: &Expression, sigma: f64, p: &[f64], rules: &Rules, parallel: bool) -> f64 {
    let parts: Vec<f64> = e
        .terms()
        .iter()
        .map(|t| term_expectation(t, sigma, p, rules, parallel))
        .collect();
    par::pairwise_sum(&parts)
}

fn term_expectation(t: &Term, sigma: f64, p: &[f64], rules: &Rules, parallel: bool) -> f64 {
    let gh = &rules.smooth;
    match t {
        Term::Monomial(m) => {
            let mut v = m.coeff;
            for (&k, &x) in m.exponents.iter().zip(p) {
                if k != 0 {
                    v *= gh.expectation(|z| (x + sigma * z).powi(k as i32));
                }
            }
            v
        }
        Term::Rbf(r) => {
            let w2 = 2.0 * r.width * r.width;
            let mut v = r.amp;
            let gh = rules.factor(r.width / sigma);
            for (&c, &x) in r.center.iter().zip(p) {
                v *= gh.expectation(|z| {
                    let d = x + sigma * z - c;
                    (-d * d / w2).exp()
                });
            }
            v
        }
        Term::Trig(tr) => {
            let mut v = tr.coeff * (-tr.damping).exp();
            for ((&k, &phi), &x) in tr.freqs.iter().zip(&tr.phases).zip(p) {
                let gh = rules.factor(1.0 / (k.unsigned_abs() as f64 * sigma));
                v *= gh.expectation(|z| (k as f64 * (x + sigma * z) + phi).cos());
            }
            v
        }
        Term::LinearArg(l) => {
            let kinked = l.activation.is_nonsmooth()
                && l.smoothed_sigma == 0.0
                && l.direction.iter().any(|&d| d != 0.0);
            if kinked {
                kinked_expectation(l, sigma, p, rules, parallel)
            } else {
                let n = p.len();
                tensor_expectation(gh, n, parallel, |z| {
                    let x: Vec<f64> = p.iter().zip(z).map(|(&pi, &zi)| pi + sigma * zi).collect();
                    t.value(&x)
                })
            }
        }
    }
}

fn raw_activation(act: Activation, y: f64) -> f64 {
    match act {
        Activation::Sign => {
            if y > 0.0 {
                1.0
            } else if y < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Activation::Relu => y.max(0.0),
        Activation::Sin => y.sin(),
    }
}

fn kinked_expectation(
    l: &LinearArgTerm,
    sigma: f64,
    p: &[f64],
    rules: &Rules,
    parallel: bool,
) -> f64 {
    let n = p.len();
    let pivot = (0..n)
        .max_by(|&a, &b| l.direction[a].abs().total_cmp(&l.direction[b].abs()))
        .expect("dimension is positive");
    let base: f64 = p.iter().zip(&l.direction).map(|(x, d)| x * d).sum();
    let slope = sigma * l.direction[pivot];
    let others: Vec<usize> = (0..n).filter(|&d| d != pivot).collect();
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let legendre = &rules.kink;

    let inner = |z_rest: &[f64]| -> f64 {
        let offset: f64 = base
            + others
                .iter()
                .zip(z_rest)
                .map(|(&d, &z)| sigma * l.direction[d] * z)
                .sum::<f64>();
        let kink = (-offset / slope).clamp(-KINK_DOMAIN, KINK_DOMAIN);
        let mut parts = Vec::with_capacity(2 * legendre.len());
        for (a, b) in [(-KINK_DOMAIN, kink), (kink, KINK_DOMAIN)] {
            if b <= a {
                continue;
            }
            for (z, w) in legendre.on_interval(a, b) {
                let density = inv_sqrt_2pi * (-0.5 * z * z).exp();
                parts.push(w * density * raw_activation(l.activation, offset + slope * z));
            }
        }
        par::pairwise_sum(&parts)
    };
    // integrating the pivot axis removes the kink, so the rest is smooth
    l.coeff * tensor_expectation(&rules.smooth, n - 1, parallel, inner)
}

/// `E[f(Z)]` for a standard normal vector of length `dims` on the tensor grid
/// of `rule`. The first axis is distributed across threads; partial sums are
/// combined pairwise in index order.
fn tensor_expectation<F>(rule: &GaussHermite, dims: usize, parallel: bool, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if dims == 0 {
        return f(&[]);
    }
    let nodes = rule.nodes();
    let weights = rule.weights();
    let m = nodes.len();
    let rest = m.pow(dims as u32 - 1);
    let slabs = par::map_range(m, parallel, |i0| {
        let mut z = vec![0.0; dims];
        z[0] = nodes[i0];
        let mut parts = Vec::with_capacity(rest);
        for flat in 0..rest {
            let mut w = weights[i0];
            let mut idx = flat;
            for zd in z.iter_mut().skip(1) {
                let i = idx % m;
                idx /= m;
                *zd = nodes[i];
                w *= weights[i];
            }
            parts.push(w * f(&z));
        }
        par::pairwise_sum(&parts)
    });
    par::pairwise_sum(&slabs)
}

fn monte_carlo(e: &Expression, sigma: f64, p: &[f64], cfg: &OracleConfig) -> OracleEstimate {
    let total = cfg.mc_samples;
    let n = p.len();
    let chunks = par::map_range(MC_CHUNKS, cfg.parallel, |c| {
        let start = c * total / MC_CHUNKS;
        let end = (c + 1) * total / MC_CHUNKS;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.mc_seed);
        rng.set_stream(c as u64);
        let mut x = vec![0.0; n];
        let mut values = Vec::with_capacity(end - start);
        let mut squares = Vec::with_capacity(end - start);
        for _ in start..end {
            for (xd, &pd) in x.iter_mut().zip(p) {
                let z: f64 = rng.sample(StandardNormal);
                *xd = pd + sigma * z;
            }
            let v = e.eval(&x).expect("dimension checked by caller");
            values.push(v);
            squares.push(v * v);
        }
        (par::pairwise_sum(&values), par::pairwise_sum(&squares))
    });
    let sums: Vec<f64> = chunks.iter().map(|c| c.0).collect();
    let sq: Vec<f64> = chunks.iter().map(|c| c.1).collect();
    let m = total as f64;
    let mean = par::pairwise_sum(&sums) / m;
    let var = ((par::pairwise_sum(&sq) / m - mean * mean) * m / (m - 1.0)).max(0.0);
    OracleEstimate {
        value: mean,
        error_estimate: (var / m).sqrt(),
    }
}
