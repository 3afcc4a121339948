//! Sampling of low-rank weight matrices `W = C·A`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::meanfield::NetworkConfig;
use crate::Ensemble;

/// A sampled low-rank weight matrix, kept in factored form.
///
/// `frame` is `n_out×r` with orthonormal columns, `coeffs` is `r×n_in`;
/// the assembled matrix is `W = frame·coeffs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankWeights {
    pub frame: DMatrix<f64>,
    pub coeffs: DMatrix<f64>,
    pub ensemble: Ensemble,
}

impl LowRankWeights {
    pub fn n_out(&self) -> usize {
        self.frame.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn rank(&self) -> usize {
        self.frame.ncols()
    }

    /// Dense `W = C·A`.
    pub fn assemble(&self) -> DMatrix<f64> {
        &self.frame * &self.coeffs
    }

    /// `W·v` without assembling `W`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.frame * (&self.coeffs * v)
    }

    /// `Wᵀ·v` without assembling `W`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        self.coeffs.transpose() * (self.frame.transpose() * v)
    }

    /// `W·M` without assembling `W`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.frame * (&self.coeffs * m)
    }

    /// Frame coefficients `A·v` of the next preactivation (before bias).
    pub fn frame_coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.coeffs * v
    }

    /// `C₁ + … + C_r`, the direction the shared bias scalar acts along.
    pub fn frame_sum(&self) -> DVector<f64> {
        let ones = DVector::from_element(self.rank(), 1.0);
        &self.frame * ones
    }
}

/// Orthonormal `n×r` frame, Haar-distributed on the Stiefel manifold:
/// QR of an i.i.d. Gaussian matrix with the sign of `R`'s diagonal fixed.
fn haar_frame(n: usize, r: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let gaussian = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for k in 0..r {
        if rmat[(k, k)] < 0.0 {
            for i in 0..n {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    q
}

/// First `r` values of a partial Fisher-Yates shuffle of `0..n`.
fn distinct_indices(n: usize, r: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for k in 0..r {
        let j = rng.random_range(k..n);
        pool.swap(k, j);
    }
    pool.truncate(r);
    pool
}

/// Draws one weight matrix of shape `n_out×n_in` with rank
/// `r = round(γ·n_out)`.
///
/// Gaussian ensemble: Haar frame `C`, coefficients `A` i.i.d.
/// `N(0, σ_α²/n_in)`.  Orthogonal ensemble (square layers only): `r`
/// orthonormal columns scaled by `σ_α` in random column positions, the
/// remaining columns zero, so `WᵀW` has spectrum `{σ_α² (×r), 0 (×n−r)}`.
pub fn sample_weights(
    cfg: &NetworkConfig,
    n_out: usize,
    n_in: usize,
    rng: &mut impl Rng,
) -> Result<LowRankWeights> {
    let r = (cfg.gamma * n_out as f64).round() as usize;
    if r < 1 || r > n_out.min(n_in) {
        return Err(Error::Domain(format!(
            "rank {r} outside [1, min({n_out}, {n_in})]"
        )));
    }
    match cfg.ensemble {
        Ensemble::LowRankGaussian => {
            let frame = haar_frame(n_out, r, rng);
            let sd = (cfg.sigma_alpha2 / n_in as f64).sqrt();
            let coeffs = DMatrix::from_fn(r, n_in, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
            Ok(LowRankWeights {
                frame,
                coeffs,
                ensemble: cfg.ensemble,
            })
        }
        Ensemble::LowRankOrthogonal => {
            if n_out != n_in {
                return Err(Error::Domain(
                    "orthogonal ensemble needs square layers".into(),
                ));
            }
            let frame = haar_frame(n_out, r, rng);
            let sigma = cfg.sigma_alpha2.sqrt();
            let columns = distinct_indices(n_in, r, rng);
            let mut coeffs = DMatrix::zeros(r, n_in);
            for (k, &j) in columns.iter().enumerate() {
                coeffs[(k, j)] = sigma;
            }
            Ok(LowRankWeights {
                frame,
                coeffs,
                ensemble: cfg.ensemble,
            })
        }
    }
}
