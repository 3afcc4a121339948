//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument violated a precondition (range, sign, shape, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A derivative order was requested that the activation does not have.
    #[error("activation `{family}` has no derivative of order {order}")]
    UnsupportedDerivative { family: &'static str, order: u8 },

    /// An integrand evaluated to a non-finite value at a quadrature node
    /// or Monte-Carlo sample.
    #[error("integrand not finite at {argument}")]
    NonFiniteIntegrand { argument: f64 },

    /// A fixed-point iteration ran out of its iteration budget.  The last
    /// iterate and residual are reported as diagnostics.
    #[error(
        "no convergence after {iterations} iterations (last iterate {last:.6e}, residual {residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },

    /// A depth scale asked for `log` of a non-positive linearisation slope.
    #[error("depth scale undefined: log argument {argument:.6e} is not positive")]
    NonPositiveLogArgument { argument: f64 },

    /// Power-series reversion is impossible (vanishing leading coefficient).
    #[error("series reversion failed: {0}")]
    ReversionFailure(String),

    /// A spectrum collapsed (e.g. μ₁ = 0) and its moments are undefined.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    /// Propagated values left the representable range at the given layer.
    #[error("numeric overflow at layer {layer}")]
    Overflow { layer: usize },

    /// A dense decomposition (SVD/QR/eigen) failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}
