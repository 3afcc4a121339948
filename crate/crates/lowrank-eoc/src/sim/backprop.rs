//! Exact backpropagation of the sum-of-squares loss `E = ½‖h^L‖²` through a
//! stored network realization.
//!
//! The trainable parameters are the frame coefficients `α^{(l)}`; by the
//! chain rule their gradient is the outer product
//! `∂E/∂α^{(l)} = (C^{(l)ᵀ}δ^l)·φ(h^{l-1})ᵀ` with
//! `δ^l = φ′(h^l) ⊙ (W^{(l+1)ᵀ}δ^{l+1})` and `δ^L = h^L`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::meanfield::NetworkConfig;
use crate::sim::forward::{equilibrium_input, sample_layer, LayerSample};
use crate::sim::substream;
use crate::activations::Activation;
use crate::trajectory::{RecordSource, TrajectoryQuantity, TrajectoryRecord};

/// A fully materialised network realization: input plus every layer's
/// weights and bias.  Kept around so gradients can be checked against finite
/// differences of the loss.
#[derive(Debug, Clone)]
pub struct SampledNetwork {
    pub activation: Activation,
    pub input: DVector<f64>,
    pub layers: Vec<LayerSample>,
}

impl SampledNetwork {
    /// Samples the realization for `(seed, trial)` with input length `q0`.
    pub fn sample(cfg: &NetworkConfig, q0: f64, seed: u64, trial: u64) -> Result<Self> {
        let input = equilibrium_input(cfg.width, q0, &mut substream(seed, trial, 0));
        let layers = (1..=cfg.depth)
            .map(|l| sample_layer(cfg, &mut substream(seed, trial, l as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            activation: cfg.activation,
            input,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.input.len()
    }

    /// Preactivations `h^0, …, h^L`.
    pub fn preactivations(&self) -> Result<Vec<DVector<f64>>> {
        let phi = self.activation;
        let mut hs = Vec::with_capacity(self.layers.len() + 1);
        hs.push(self.input.clone());
        for (idx, layer) in self.layers.iter().enumerate() {
            let prev = hs.last().unwrap();
            let (_, h) = layer.forward(&prev.map(|x| phi.phi(x)));
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { layer: idx + 1 });
            }
            hs.push(h);
        }
        Ok(hs)
    }

    /// `E = ½‖h^L‖²`.
    pub fn sum_of_squares_loss(&self) -> Result<f64> {
        Ok(0.5 * self.preactivations()?.last().unwrap().norm_squared())
    }

    fn backward(&self) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let phi = self.activation;
        let hs = self.preactivations()?;
        let depth = self.depth();
        // deltas[l-1] = δ^l and phis[l-1] = φ(h^{l-1}) for l = 1..=L.
        let mut deltas = vec![DVector::zeros(0); depth];
        let mut phis = Vec::with_capacity(depth);
        for h in hs.iter().take(depth) {
            phis.push(h.map(|x| phi.phi(x)));
        }
        let mut delta = hs[depth].clone();
        for l in (1..=depth).rev() {
            deltas[l - 1] = delta.clone();
            if l > 1 {
                let back = self.layers[l - 1].weights.apply_transpose(&delta);
                let h_prev = &hs[l - 1];
                delta = DVector::from_fn(self.width(), |i, _| {
                    phi.phi_prime(h_prev[i]) * back[i]
                });
            }
        }
        Ok((deltas, phis))
    }

    /// `‖∂E/∂α^{(l)}‖²` for every layer `l = 1..=L`; the outer-product
    /// structure factorises the norm as `‖Cᵀδ^l‖²·‖φ(h^{l-1})‖²`.
    pub fn alpha_gradient_sq_norms(&self) -> Result<Vec<f64>> {
        let (deltas, phis) = self.backward()?;
        Ok(self
            .layers
            .iter()
            .zip(deltas.iter().zip(&phis))
            .map(|(layer, (delta, phi_prev))| {
                let projected = layer.weights.frame.transpose() * delta;
                projected.norm_squared() * phi_prev.norm_squared()
            })
            .collect())
    }

    /// Dense per-layer gradients `∂E/∂α^{(l)}` (each `r×N`).
    pub fn alpha_gradients(&self) -> Result<Vec<DMatrix<f64>>> {
        let (deltas, phis) = self.backward()?;
        Ok(self
            .layers
            .iter()
            .zip(deltas.iter().zip(&phis))
            .map(|(layer, (delta, phi_prev))| {
                let projected = layer.weights.frame.transpose() * delta;
                &projected * phi_prev.transpose()
            })
            .collect())
    }

    /// Copy with `α^{(layer)}_{k,j}` shifted by `delta` (`layer` is 1-based).
    pub fn with_perturbed_alpha(&self, layer: usize, k: usize, j: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.layers[layer - 1].weights.coeffs[(k, j)] += delta;
        out
    }
}

/// Per-layer squared gradient norms `‖∇_{α^{(l)}}E‖²` of one sampled trial,
/// started at equilibrium length `q*`.
pub fn backprop_gradient_norms(
    cfg: &NetworkConfig,
    q_star: f64,
    seed: u64,
    trial: u64,
) -> Result<TrajectoryRecord> {
    let network = SampledNetwork::sample(cfg, q_star, seed, trial)?;
    let norms = network.alpha_gradient_sq_norms()?;
    Ok(TrajectoryRecord::from_scalars(
        TrajectoryQuantity::GradientNorm,
        1,
        norms,
        RecordSource::Simulation {
            seed,
            trial,
            width: cfg.width,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Ensemble;
    use approx::assert_abs_diff_eq;

    fn cfg(depth: usize, width: usize, activation: Activation) -> NetworkConfig {
        NetworkConfig::new(
            0.5,
            2.4,
            0.16,
            depth,
            width,
            activation,
            Ensemble::LowRankGaussian,
        )
        .unwrap()
    }

    #[test]
    fn depth_one_identity_gradient_matches_chain_rule() {
        // E = ½‖C(Ax + b1)‖² = ½‖Ax + b1‖², so ∂E/∂α_{kj} = (Ax + b1)_k x_j.
        let c = cfg(1, 30, Activation::Identity);
        let network = SampledNetwork::sample(&c, 0.8, 3, 0).unwrap();
        let grads = network.alpha_gradients().unwrap();
        let layer = &network.layers[0];
        let z = layer.weights.frame_coefficients(&network.input)
            + DVector::from_element(layer.weights.rank(), layer.bias);
        for k in 0..layer.weights.rank() {
            for j in (0..30).step_by(7) {
                let expect = z[k] * network.input[j];
                assert_abs_diff_eq!(grads[0][(k, j)], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = cfg(5, 40, Activation::Tanh);
        let network = SampledNetwork::sample(&c, 0.5, 8, 0).unwrap();
        let grads = network.alpha_gradients().unwrap();
        let step = 1e-5;
        let mut rng = substream(99, 0, 0);
        use rand::Rng;
        for layer in 1..=5 {
            let grad = &grads[layer - 1];
            let scale = grad.amax();
            let mut checked = 0;
            let mut attempts = 0;
            while checked < 5 && attempts < 200 {
                attempts += 1;
                let k = rng.random_range(0..grad.nrows());
                let j = rng.random_range(0..grad.ncols());
                let analytic = grad[(k, j)];
                if analytic.abs() < 1e-3 * scale {
                    continue; // avoid near-zero denominators in the relative check
                }
                let plus = network
                    .with_perturbed_alpha(layer, k, j, step)
                    .sum_of_squares_loss()
                    .unwrap();
                let minus = network
                    .with_perturbed_alpha(layer, k, j, -step)
                    .sum_of_squares_loss()
                    .unwrap();
                let fd = (plus - minus) / (2.0 * step);
                let rel = (fd - analytic).abs() / analytic.abs();
                assert!(
                    rel <= 1e-5,
                    "layer {layer} α[{k},{j}]: fd {fd} vs {analytic} (rel {rel})"
                );
                checked += 1;
            }
            assert_eq!(checked, 5, "not enough checkable entries at layer {layer}");
        }
    }

    #[test]
    fn gradient_norms_factorisation_agrees_with_dense_gradients() {
        let c = cfg(4, 24, Activation::Erf);
        let network = SampledNetwork::sample(&c, 0.5, 12, 1).unwrap();
        let norms = network.alpha_gradient_sq_norms().unwrap();
        let grads = network.alpha_gradients().unwrap();
        for (n, g) in norms.iter().zip(&grads) {
            let dense: f64 = g.iter().map(|x| x * x).sum();
            assert_abs_diff_eq!(*n, dense, epsilon = 1e-9 * dense.max(1.0));
        }
    }

    #[test]
    fn record_is_deterministic_and_layer_indexed() {
        let c = cfg(6, 32, Activation::Tanh);
        let a = backprop_gradient_norms(&c, 0.5, 44, 3).unwrap();
        let b = backprop_gradient_norms(&c, 0.5, 44, 3).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.first_layer, 1);
        assert_eq!(a.values.len(), 6);
        assert!(a.is_finite());
    }
}
