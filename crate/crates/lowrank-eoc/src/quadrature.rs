//! Gaussian-measure integrals.
//!
//! `Dz = (2π)^{-1/2} e^{-z²/2} dz` is the probabilists' normal measure; every
//! map of the theory is built from one- and two-dimensional integrals against
//! it.  Nodes and weights come from the Golub-Welsch eigendecomposition of
//! the Hermite Jacobi matrix, normalised so that `∫Dz = Σ wᵢ = 1`, and are
//! cached per order.  A seeded Monte-Carlo estimator of the same integrals
//! serves as an independent reference.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default Gauss-Hermite order; tanh-type integrands are converged far below
/// 1e-10 at this order.
pub const DEFAULT_QUAD_ORDER: usize = 61;

/// Correlations this close to ±1 collapse the pair integral to its exact
/// degenerate form `u₂ = ±u₁` instead of evaluating `√(1−c²)`.
pub const DEGENERATE_CORRELATION: f64 = 1e-12;

/// Gauss-Hermite rule for `∫ f(z) Dz` with probabilists' normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes the rule of the given order (number of nodes).
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("quadrature order must be positive".into()));
        }
        // Jacobi matrix of the probabilists' Hermite polynomials: zero
        // diagonal, off-diagonal √k.
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j {
                (j as f64).sqrt()
            } else if j + 1 == i {
                (i as f64).sqrt()
            } else {
                0.0
            }
        });
        let eigen = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &node)| {
                let v0 = eigen.eigenvectors[(0, k)];
                (node, v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Enforce the ± symmetry of the exact rule so that odd integrands
        // cancel to machine precision.
        let n = pairs.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let mag = 0.5 * (pairs[j].0 - pairs[i].0);
            let w = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (-mag, w);
            pairs[j] = (mag, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        // Renormalise so Σwᵢ is as close to the measure's unit mass as
        // floating point allows.
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        for p in &mut pairs {
            p.1 /= total;
        }

        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Returns the cached rule for `order`, computing it on first use.
    pub fn cached(order: usize) -> Result<Arc<GaussHermite>> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(rule) = cache.read().unwrap().get(&order) {
            return Ok(rule.clone());
        }
        let rule = Arc::new(GaussHermite::new(order)?);
        cache.write().unwrap().insert(order, rule.clone());
        Ok(rule)
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ f(z) Dz ≈ Σ wᵢ f(zᵢ)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { argument: z });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Tensor-product estimate of `∫∫ f(u₁, u₂) Dz₁ Dz₂` with the correlated
    /// arguments `u₁ = √q11·z₁`, `u₂ = √q22·(c·z₁ + √(1−c²)·z₂)`.
    ///
    /// For `1−|c| ≤ 1e-12` the exact degenerate form `u₂ = ±u₁·√(q22/q11)` is
    /// used; the `c → 1` limit is the quantity of interest and the direct
    /// evaluation of `√(1−c²)` is unstable there.
    pub fn integrate_pair(
        &self,
        f: impl Fn(f64, f64) -> f64,
        q11: f64,
        q22: f64,
        c: f64,
    ) -> Result<f64> {
        if !(q11 > 0.0) || !(q22 > 0.0) {
            return Err(Error::Domain(format!(
                "pair integral needs positive lengths, got q11={q11}, q22={q22}"
            )));
        }
        if !(c.abs() <= 1.0 + 1e-9) {
            return Err(Error::Domain(format!("correlation {c} outside [-1, 1]")));
        }
        let c = c.clamp(-1.0, 1.0);
        let (s1, s2) = (q11.sqrt(), q22.sqrt());

        if 1.0 - c.abs() <= DEGENERATE_CORRELATION {
            let sign = c.signum();
            let mut acc = 0.0;
            for (&z, &w) in self.nodes.iter().zip(&self.weights) {
                let v = f(s1 * z, sign * s2 * z);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { argument: z });
                }
                acc += w * v;
            }
            return Ok(acc);
        }

        let s = (1.0 - c * c).sqrt();
        let mut acc = 0.0;
        for (&z1, &w1) in self.nodes.iter().zip(&self.weights) {
            let u1 = s1 * z1;
            let mut inner = 0.0;
            for (&z2, &w2) in self.nodes.iter().zip(&self.weights) {
                let u2 = s2 * (c * z1 + s * z2);
                let v = f(u1, u2);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { argument: z2 });
                }
                inner += w2 * v;
            }
            acc += w1 * inner;
        }
        Ok(acc)
    }
}

fn mc_reduce(values: impl Iterator<Item = f64>) -> Result<(f64, f64)> {
    let mut n = 0u64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { argument: v });
        }
        n += 1;
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / nf).sqrt()))
}

/// Monte-Carlo estimate of `∫ f(z) Dz` with its standard error.
/// Deterministic for a fixed seed.
pub fn mc_gauss_1d(f: impl Fn(f64) -> f64, samples: u64, seed: u64) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Domain("Monte-Carlo needs at least one sample".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    mc_reduce((0..samples).map(|_| {
        let z: f64 = rng.sample(StandardNormal);
        f(z)
    }))
}

/// Monte-Carlo estimate of the correlated pair integral evaluated by
/// [`GaussHermite::integrate_pair`], with the same `(q11, q22, c)` meaning.
pub fn mc_gauss_pair(
    f: impl Fn(f64, f64) -> f64,
    q11: f64,
    q22: f64,
    c: f64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Domain("Monte-Carlo needs at least one sample".into()));
    }
    if !(q11 > 0.0) || !(q22 > 0.0) || c.abs() > 1.0 + 1e-9 {
        return Err(Error::Domain("invalid (q11, q22, c) for pair integral".into()));
    }
    let c = c.clamp(-1.0, 1.0);
    let (s1, s2) = (q11.sqrt(), q22.sqrt());
    let s = if 1.0 - c.abs() <= DEGENERATE_CORRELATION {
        0.0
    } else {
        (1.0 - c * c).sqrt()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    mc_reduce((0..samples).map(|_| {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        f(s1 * z1, s2 * (c * z1 + s * z2))
    }))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (`Σ wᵢ = 2`), used for the
/// bounded-support spectral integrals.
pub(crate) fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        let k = if i + 1 == j {
            j as f64
        } else if j + 1 == i {
            i as f64
        } else {
            return 0.0;
        };
        k / (4.0 * k * k - 1.0).sqrt()
    });
    let eigen = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let v0 = eigen.eigenvectors[(0, k)];
            (node, 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}
