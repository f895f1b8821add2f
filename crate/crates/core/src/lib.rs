//! Closed-form Weierstrass transforms.
//!
//! The Weierstrass transform of `f: R^n -> R` at scale `sigma` is the
//! convolution `[f * k_sigma](x)` with the isotropic Gaussian kernel
//!
//! ```text
//! k_sigma(x) = (sqrt(2 pi) sigma)^(-n) exp(-|x|^2 / (2 sigma^2))
//! ```
//!
//! For four families of terms the transform has a closed form, and this crate
//! represents all of them in one [`Expression`] type:
//!
//! * monomials `a * x_1^p_1 ... x_n^p_n` (Hermite-type polynomials in `x`, `sigma`),
//! * isotropic Gaussian RBFs `a * exp(-|x - c|^2 / (2 delta^2))`,
//! * damped trigonometric products `a * exp(-D) * prod_d cos(k_d x_d + phi_d)`,
//! * activations of a linear argument `a * f(w . x)` for `f` in sign / relu / sin.
//!
//! [`smoothing::smooth`] maps an expression to its transform, [`oracle`] computes
//! the same quantity numerically for cross-checking, and [`homotopy`] uses the
//! closed forms to run graduated optimization.
//!
//! ```
//! use weierstrass::{parser, smoothing::{self, SmoothSigma}};
//!
//! let f = parser::parse("x1^2").unwrap();
//! let g = smoothing::smooth(&f, SmoothSigma::new(1.0).unwrap());
//! assert_eq!(parser::print(&g), "1 + x1^2");
//! ```

pub mod expr;
pub mod homotopy;
pub mod kernel;
pub mod oracle;
mod par;
pub mod parser;
pub mod quadrature;
pub mod smoothing;
pub mod verify;

pub use expr::{
    Activation, EvalPoint, ExprError, Expression, LinearArgTerm, MonomialTerm, RbfTerm, Term,
    TrigTerm,
};
pub use smoothing::SmoothSigma;
