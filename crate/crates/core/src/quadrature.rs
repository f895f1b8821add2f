//! Gauss-Hermite and Gauss-Legendre rules.
//!
//! Nodes are bracketed by Sturm-sequence bisection on the Jacobi matrix
//! (Hermite) or seeded by the Chebyshev-like asymptotic guess (Legendre), then
//! polished by Newton iteration on the three-term recurrence.

use std::f64::consts::PI;

const NEWTON_MAX_ITER: usize = 100;

/// Gauss-Hermite rule for the standard normal weight.
///
/// `expectation(f)` approximates `E[f(Z)]`, `Z ~ N(0, 1)`, and is exact for
/// polynomials of degree up to `2 * len() - 1`. Weights are normalised to
/// sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// # Panics
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a Gauss-Hermite rule needs at least one node");
        // Roots of the physicists' polynomial H_n (weight exp(-x^2)), largest
        // first, using the orthonormal recurrence to keep values in range.
        let half = n.div_ceil(2);
        let mut roots = vec![0.0f64; half];
        let mut wts = vec![0.0f64; half];
        let pim4 = PI.powf(-0.25);
        let upper = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
        for (i, (root, wt)) in roots.iter_mut().zip(wts.iter_mut()).enumerate() {
            // i-th largest eigenvalue of the Jacobi matrix, bracketed by
            // bisection and then polished by Newton.
            let rank = n - 1 - i;
            let (mut lo, mut hi) = (0.0f64, upper);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi || hi - lo <= 1e-10 {
                    break;
                }
                if eigenvalues_below(n, mid) > rank {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut z = 0.5 * (lo + hi);
            for _ in 0..NEWTON_MAX_ITER {
                let (p, dp) = orthonormal_hermite(n, z, pim4);
                if p == 0.0 {
                    break;
                }
                let z1 = z;
                z = z1 - p / dp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, dp) = orthonormal_hermite(n, z, pim4);
            *root = z;
            *wt = 2.0 / (dp * dp);
        }

        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        // Ascending order: negative roots first.
        for i in 0..half {
            nodes.push(-roots[i]);
            weights.push(wts[i]);
        }
        let mirrored = if n % 2 == 1 { half - 1 } else { half };
        for i in (0..mirrored).rev() {
            nodes.push(roots[i]);
            weights.push(wts[i]);
        }
        if n % 2 == 1 {
            // the middle root is exactly zero by symmetry
            nodes[half - 1] = 0.0;
        }
        // Change of variable x -> sqrt(2) x turns exp(-x^2) into the standard
        // normal density; normalising absorbs the 1/sqrt(pi) factor.
        let total: f64 = weights.iter().sum();
        for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
            *x *= std::f64::consts::SQRT_2;
            *w /= total;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` for standard normal `Z`, summed pairwise.
    pub fn expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .collect();
        crate::par::pairwise_sum(&terms)
    }
}

/// Number of eigenvalues below `x` of the Jacobi matrix of the physicists'
/// Hermite polynomials (zero diagonal, off-diagonal `sqrt(j / 2)`), by the
/// Sturm sequence of its LDL^T pivots.
fn eigenvalues_below(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut d = -x;
    for j in 0..n {
        if j > 0 {
            d = -x - (j as f64 / 2.0) / d;
        }
        if d == 0.0 {
            d = -f64::EPSILON * x.abs().max(1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Value of the orthonormal Hermite function polynomial of degree `n` at `z`
/// and its derivative.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// # Panics
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a Gauss-Legendre rule needs at least one node");
        let half = n.div_ceil(2);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..half {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..NEWTON_MAX_ITER {
                let (p, d) = legendre(n, z);
                let z1 = z;
                z = z1 - p / d;
                if (z - z1).abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            let w = 2.0 / ((1.0 - z * z) * d * d);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[half - 1] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
    }
    (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
}
