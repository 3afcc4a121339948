//! Input-output Jacobian spectra of sampled networks.
//!
//! The Jacobian of the activation-to-activation map is the layer-ordered
//! product `J = Π_l D^l W^l` with `D^l = diag(φ′(h^l))`.  The product is
//! accumulated densely with periodic scale extraction (off criticality it
//! grows like `χ^L`), and the squared singular values are recovered from an
//! SVD with the accumulated log-scale reapplied.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::meanfield::NetworkConfig;
use crate::rmt::SpectrumMoments;
use crate::sim::forward::{equilibrium_input, sample_layer};
use crate::sim::substream;
use crate::trajectory::{RecordSource, TrajectoryQuantity, TrajectoryRecord};

/// Layers between scale extractions of the accumulated product.
const RESCALE_EVERY: usize = 8;

/// All squared singular values of the depth-`depth` Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSnapshot {
    pub depth: usize,
    /// Sorted descending, zeros included.
    pub squared_singular_values: Vec<f64>,
}

fn spectrum_of(product: &DMatrix<f64>, log_scale: f64, layer: usize) -> Result<Vec<f64>> {
    let svd = nalgebra::SVD::try_new(product.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical(format!("SVD did not converge at depth {layer}")))?;
    let mut values: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            if s > 0.0 {
                (2.0 * (s.ln() + log_scale)).exp()
            } else {
                0.0
            }
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { layer });
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Squared singular value spectra of the accumulated Jacobian at each depth
/// in `depths` (ascending, each in `1..=cfg.depth`), from one realization
/// started at equilibrium length `q*`.
pub fn jacobian_spectra_at_depths(
    cfg: &NetworkConfig,
    q_star: f64,
    seed: u64,
    trial: u64,
    depths: &[usize],
) -> Result<Vec<SpectrumSnapshot>> {
    if depths.is_empty() {
        return Err(Error::Domain("no snapshot depths requested".into()));
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("snapshot depths must be strictly increasing".into()));
    }
    if *depths.last().unwrap() > cfg.depth || depths[0] < 1 {
        return Err(Error::Domain(format!(
            "snapshot depths must lie in 1..={}",
            cfg.depth
        )));
    }
    let n = cfg.width;
    let phi = cfg.activation;
    let mut h = equilibrium_input(n, q_star, &mut substream(seed, trial, 0));
    let mut product = DMatrix::<f64>::identity(n, n);
    let mut log_scale = 0.0;
    let mut snapshots = Vec::with_capacity(depths.len());
    let mut next_snapshot = 0;

    for layer in 1..=*depths.last().unwrap() {
        let sample = sample_layer(cfg, &mut substream(seed, trial, layer as u64))?;
        let (_, h_next) = sample.forward(&h.map(|x| phi.phi(x)));
        if h_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { layer });
        }
        h = h_next;
        // product ← D^l W^l · product
        product = sample.weights.apply_matrix(&product);
        let derivs = DVector::from_fn(n, |i, _| phi.phi_prime(h[i]));
        for i in 0..n {
            let d = derivs[i];
            for j in 0..n {
                product[(i, j)] *= d;
            }
        }
        if layer % RESCALE_EVERY == 0 {
            let scale = product.amax();
            if !scale.is_finite() {
                return Err(Error::Overflow { layer });
            }
            if scale > 0.0 {
                product /= scale;
                log_scale += scale.ln();
            }
        }
        if depths[next_snapshot] == layer {
            snapshots.push(SpectrumSnapshot {
                depth: layer,
                squared_singular_values: spectrum_of(&product, log_scale, layer)?,
            });
            next_snapshot += 1;
        }
    }
    Ok(snapshots)
}

/// Full-depth Jacobian spectrum and its empirical moments.
pub fn jacobian_spectrum(
    cfg: &NetworkConfig,
    q_star: f64,
    seed: u64,
    trial: u64,
) -> Result<(TrajectoryRecord, SpectrumMoments)> {
    let snapshots = jacobian_spectra_at_depths(cfg, q_star, seed, trial, &[cfg.depth])?;
    let snapshot = snapshots.into_iter().next().unwrap();
    let moments = SpectrumMoments::from_eigenvalues(&snapshot.squared_singular_values, cfg.depth);
    let record = TrajectoryRecord {
        quantity: TrajectoryQuantity::SingularSpectrum,
        first_layer: cfg.depth,
        values: vec![snapshot.squared_singular_values],
        source: RecordSource::Simulation {
            seed,
            trial,
            width: cfg.width,
        },
    };
    Ok((record, moments))
}

/// `(1/N)·tr((D·W)(D·W)ᵀ)` for a single layer sampled at equilibrium; its
/// expectation is the correlation-map slope `χ_γ`.
pub fn mean_sq_singular_per_layer(
    cfg: &NetworkConfig,
    q_star: f64,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    let n = cfg.width;
    let phi = cfg.activation;
    let input = equilibrium_input(n, q_star, &mut substream(seed, trial, 0));
    let sample = sample_layer(cfg, &mut substream(seed, trial, 1))?;
    let (_, h) = sample.forward(&input.map(|x| phi.phi(x)));
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { layer: 1 });
    }
    let dense = sample.weights.assemble();
    let mut acc = 0.0;
    for i in 0..n {
        let d = phi.phi_prime(h[i]);
        let row_sq: f64 = dense.row(i).iter().map(|w| w * w).sum();
        acc += d * d * row_sq;
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::sim::run_trials;
    use crate::Ensemble;
    use approx::assert_abs_diff_eq;

    fn cfg(
        ensemble: Ensemble,
        activation: Activation,
        gamma: f64,
        sigma_alpha2: f64,
        depth: usize,
        width: usize,
    ) -> NetworkConfig {
        NetworkConfig::new(gamma, sigma_alpha2, 0.0, depth, width, activation, ensemble).unwrap()
    }

    #[test]
    fn depth_one_orthogonal_identity_spectrum_is_exact() {
        let sigma2 = 1.44;
        let c = cfg(
            Ensemble::LowRankOrthogonal,
            Activation::Identity,
            0.25,
            sigma2,
            1,
            64,
        );
        let (record, moments) = jacobian_spectrum(&c, 0.5, 9, 0).unwrap();
        let spectrum = &record.values[0];
        let r = 16;
        for (k, &v) in spectrum.iter().enumerate() {
            let expect = if k < r { sigma2 } else { 0.0 };
            assert!((v - expect).abs() <= 1e-10, "λ_{k} = {v}");
        }
        assert_abs_diff_eq!(moments.m1, 0.25 * sigma2, epsilon = 1e-10);
    }

    #[test]
    fn rank_of_deep_jacobian_never_exceeds_layer_rank() {
        let c = cfg(
            Ensemble::LowRankGaussian,
            Activation::Tanh,
            0.25,
            6.0,
            4,
            48,
        );
        let (record, _) = jacobian_spectrum(&c, 0.5, 10, 0).unwrap();
        let spectrum = &record.values[0];
        let r = 12;
        let top = spectrum[0].max(1e-300);
        let numerical_rank = spectrum.iter().filter(|&&v| v > 1e-20 * top).count();
        assert!(numerical_rank <= r, "rank {numerical_rank} > {r}");
    }

    #[test]
    fn snapshots_are_consistent_with_full_run() {
        let c = cfg(
            Ensemble::LowRankGaussian,
            Activation::Erf,
            0.5,
            2.0,
            10,
            40,
        );
        let snaps = jacobian_spectra_at_depths(&c, 0.5, 12, 0, &[3, 10]).unwrap();
        assert_eq!(snaps[0].depth, 3);
        assert_eq!(snaps[1].depth, 10);
        let (record, _) = jacobian_spectrum(&c, 0.5, 12, 0).unwrap();
        for (a, b) in snaps[1]
            .squared_singular_values
            .iter()
            .zip(&record.values[0])
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a.abs().max(1.0));
        }
        assert!(jacobian_spectra_at_depths(&c, 0.5, 12, 0, &[0, 3]).is_err());
        assert!(jacobian_spectra_at_depths(&c, 0.5, 12, 0, &[3, 11]).is_err());
    }

    #[test]
    fn rescaling_reproduces_the_exact_orthogonal_spectrum() {
        // Full-rank orthogonal, identity activation: every layer multiplies
        // all singular values by exactly σ_α, so JJᵀ = (σ_α²)^L·I.  Raw
        // product entries reach ~1.5^20 ≈ 3e3 per 8-layer window, exercising
        // the log-scale bookkeeping deterministically.
        let sigma2: f64 = 1.5;
        let c = cfg(
            Ensemble::LowRankOrthogonal,
            Activation::Identity,
            1.0,
            sigma2,
            40,
            60,
        );
        let (record, moments) = jacobian_spectrum(&c, 0.5, 31, 0).unwrap();
        let expect = sigma2.powi(40);
        for &v in &record.values[0] {
            assert!((v / expect - 1.0).abs() <= 1e-9, "λ = {v} vs {expect}");
        }
        assert!((moments.m1 / expect - 1.0).abs() <= 1e-9);
        assert!((moments.variance / (expect * expect)).abs() <= 1e-9);
    }

    #[test]
    fn single_layer_trace_identity_activation() {
        // Identity activation: (1/N)tr(WWᵀ) ≈ γσ_α², exactly for the
        // orthogonal ensemble.
        let sigma2 = 2.0;
        let orth = cfg(
            Ensemble::LowRankOrthogonal,
            Activation::Identity,
            0.25,
            sigma2,
            1,
            80,
        );
        let v = mean_sq_singular_per_layer(&orth, 0.5, 14, 0).unwrap();
        assert_abs_diff_eq!(v, 0.25 * sigma2, epsilon = 1e-10);

        let gauss = cfg(
            Ensemble::LowRankGaussian,
            Activation::Identity,
            0.5,
            sigma2,
            1,
            200,
        );
        let values: Vec<f64> = run_trials(10, |t| mean_sq_singular_per_layer(&gauss, 0.5, 15, t))
            .unwrap();
        let mean = crate::stats::mean(&values);
        let se = crate::stats::standard_error(&values);
        assert!(
            (mean - 0.5 * sigma2).abs() <= 3.0 * se.max(1e-3),
            "mean {mean} (se {se})"
        );
    }
}
