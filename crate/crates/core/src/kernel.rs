//! The isotropic Gaussian kernel and two identities it satisfies: the product
//! of two Gaussians is a scaled Gaussian, and convolving a kernel evaluated
//! at an affine argument with `k_sigma` widens it to
//! `sqrt(delta^2 + a^2 sigma^2)`.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{0} must be finite")]
    NonFinite(&'static str),
}

fn positive(name: &'static str, value: f64) -> Result<f64, KernelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(KernelError::NonPositive { name, value })
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `k_sigma(x) = (sqrt(2 pi) sigma)^-n exp(-|x|^2 / (2 sigma^2))`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    dimension: usize,
}

impl GaussianKernel {
    pub fn new(sigma: f64, dimension: usize) -> Result<Self, KernelError> {
        if dimension == 0 {
            return Err(KernelError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self {
            sigma: positive("sigma", sigma)?,
            dimension,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, KernelError> {
        if x.len() != self.dimension {
            return Err(KernelError::Dimension {
                expected: self.dimension,
                found: x.len(),
            });
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Ok(normal_density(r2, self.sigma * self.sigma, self.dimension))
    }
}

/// Isotropic normal density with the given variance at squared distance `r2`.
fn normal_density(r2: f64, variance: f64, dimension: usize) -> f64 {
    (2.0 * PI * variance).powf(-0.5 * dimension as f64) * (-r2 / (2.0 * variance)).exp()
}

/// `prefactor * k(x - mean; variance)`, with the kernel parameterized by its
/// variance rather than its standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGaussian {
    pub prefactor: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl ScaledGaussian {
    pub fn new(prefactor: f64, mean: Vec<f64>, variance: f64) -> Result<Self, KernelError> {
        if mean.is_empty() {
            return Err(KernelError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self {
            prefactor,
            mean,
            variance: positive("variance", variance)?,
        })
    }

    /// `k_sigma(x - mean)` in the variance parameterization.
    pub fn from_kernel(kernel: &GaussianKernel, mean: Vec<f64>) -> Result<Self, KernelError> {
        if mean.len() != kernel.dimension {
            return Err(KernelError::Dimension {
                expected: kernel.dimension,
                found: mean.len(),
            });
        }
        Self::new(1.0, mean, kernel.sigma * kernel.sigma)
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, KernelError> {
        if x.len() != self.dimension() {
            return Err(KernelError::Dimension {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        Ok(self.prefactor * normal_density(dist2(x, &self.mean), self.variance, self.dimension()))
    }
}

/// The pointwise product of two scaled Gaussians as a single scaled Gaussian.
pub fn gaussian_product(
    g1: &ScaledGaussian,
    g2: &ScaledGaussian,
) -> Result<ScaledGaussian, KernelError> {
    let m = g1.dimension();
    if g2.dimension() != m {
        return Err(KernelError::Dimension {
            expected: m,
            found: g2.dimension(),
        });
    }
    let (v1, v2) = (g1.variance, g2.variance);
    let total = v1 + v2;
    let mean = g1
        .mean
        .iter()
        .zip(&g2.mean)
        .map(|(a, b)| (v2 * a + v1 * b) / total)
        .collect();
    let prefactor =
        g1.prefactor * g2.prefactor * normal_density(dist2(&g1.mean, &g2.mean), total, m);
    Ok(ScaledGaussian {
        prefactor,
        mean,
        variance: v1 * v2 / total,
    })
}

/// `[k_delta(a . + b) * k_sigma](x) = k_{effective_sigma}(a x + b)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineKernel {
    pub effective_sigma: f64,
    pub a: f64,
    pub b: f64,
}

impl AffineKernel {
    pub fn eval(&self, x: f64) -> f64 {
        let y = self.a * x + self.b;
        normal_density(y * y, self.effective_sigma * self.effective_sigma, 1)
    }
}

pub fn affine_kernel_convolve(
    delta: f64,
    a: f64,
    b: f64,
    sigma: f64,
) -> Result<AffineKernel, KernelError> {
    let delta = positive("delta", delta)?;
    let sigma = positive("sigma", sigma)?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(KernelError::NonFinite("affine coefficients"));
    }
    Ok(AffineKernel {
        effective_sigma: delta.hypot(a * sigma),
        a,
        b,
    })
}
