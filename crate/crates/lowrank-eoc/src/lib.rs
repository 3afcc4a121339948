//! Mean-field initialisation theory of wide low-rank feedforward networks.
//!
//! A layer of width `N` carries a rank `r = γ·N` weight matrix `W = C·A`,
//! where `C` is an orthonormal frame of `r` random directions and `A` holds
//! i.i.d. Gaussian coefficients of variance `σ_α²/N_in`.  The crate computes
//! the infinite-width theory of such networks and validates it against a
//! finite-width simulator:
//!
//! * [`activations`] — the nonlinearities φ with their first two derivatives;
//! * [`quadrature`] — Gauss-Hermite rules for `∫·Dz` integrals plus
//!   Monte-Carlo reference estimates;
//! * [`meanfield`] — length/correlation maps, fixed points `q*` and `c*`,
//!   the slope `χ_γ`, the edge-of-chaos curve and the depth scales;
//! * [`rmt`] — spectral densities and S-transforms of the weight ensembles
//!   and the analytic moments of the input-output Jacobian spectrum;
//! * [`sim`] — the finite-width sampler: weight draws, forward propagation,
//!   Jacobian spectra and exact backpropagated gradient norms.
//!
//! All randomised components are deterministic given a root seed; independent
//! trials and layers draw from counter-derived substreams so that runs are
//! reproducible regardless of thread count.

pub mod activations;
pub mod error;
pub mod meanfield;
pub mod quadrature;
pub mod rmt;
pub mod sim;
pub mod stats;
pub mod trajectory;

pub use activations::{Activation, Smoothness};
pub use error::{Error, Result};
pub use meanfield::{DepthScales, EocPoint, FixedPointReport, NetworkConfig, Phase, SolveOptions};
pub use quadrature::{GaussHermite, DEFAULT_QUAD_ORDER};
pub use rmt::{AtomicPlusBulkDensity, MomentSource, PowerSeries, SpectrumMoments};
pub use trajectory::{RecordSource, TrajectoryQuantity, TrajectoryRecord};

/// Distribution of the low-rank weight matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    /// `W = C·A` with an orthonormal frame `C` and i.i.d. Gaussian
    /// coefficients `A`, so `WᵀW` is a rank-deficient Wishart matrix.
    LowRankGaussian,
    /// `W` with `r` orthonormal columns scaled by `σ_α` and `N−r` zero
    /// columns, so `WᵀW` has spectrum `{σ_α² (mass γ), 0 (mass 1−γ)}`.
    LowRankOrthogonal,
}

impl Ensemble {
    pub fn name(self) -> &'static str {
        match self {
            Ensemble::LowRankGaussian => "gaussian",
            Ensemble::LowRankOrthogonal => "orthogonal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" | "lowrank_gaussian" => Some(Ensemble::LowRankGaussian),
            "orthogonal" | "lowrank_orthogonal" => Some(Ensemble::LowRankOrthogonal),
            _ => None,
        }
    }
}
