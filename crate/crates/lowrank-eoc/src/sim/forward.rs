//! Forward propagation through sampled low-rank layers.
//!
//! A layer maps `h ↦ C·(A·φ(h) + b·1_r)`, i.e. the new preactivation lives
//! in the frame span with coefficients `z = A·φ(h) + b·1_r` and the shared
//! bias scalar acts along `C₁+…+C_r`.  Inputs are treated as layer-0
//! preactivations, so iterating the analytic maps from the same `(q⁰, c⁰)`
//! predicts every recorded layer.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::meanfield::NetworkConfig;
use crate::sim::weights::{sample_weights, LowRankWeights};
use crate::sim::substream;
use crate::trajectory::{RecordSource, TrajectoryQuantity, TrajectoryRecord};

/// One sampled layer: factored weights plus the shared bias scalar.
#[derive(Debug, Clone)]
pub struct LayerSample {
    pub weights: LowRankWeights,
    pub bias: f64,
}

impl LayerSample {
    /// Frame coefficients `z = A·φ + b·1_r` and preactivation `h = C·z`.
    pub fn forward(&self, phi_of_prev: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut z = self.weights.frame_coefficients(phi_of_prev);
        z.add_scalar_mut(self.bias);
        let h = &self.weights.frame * &z;
        (z, h)
    }
}

/// Samples one square layer of the configured width.
pub fn sample_layer(cfg: &NetworkConfig, rng: &mut impl Rng) -> Result<LayerSample> {
    let weights = sample_weights(cfg, cfg.width, cfg.width, rng)?;
    let bias = cfg.sigma_b2.sqrt() * rng.sample::<f64, _>(StandardNormal);
    Ok(LayerSample { weights, bias })
}

/// Random direction scaled so that `‖x‖²/width = q0` exactly.
pub fn equilibrium_input(width: usize, q0: f64, rng: &mut impl Rng) -> DVector<f64> {
    let g = DVector::from_fn(width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = g.norm();
    if norm == 0.0 || q0 == 0.0 {
        return DVector::zeros(width);
    }
    g * ((q0 * width as f64).sqrt() / norm)
}

/// Two inputs with lengths `q0` and correlation `c0`, constructed exactly
/// from an orthonormalised random pair of directions.
pub fn correlated_inputs(
    width: usize,
    q0: f64,
    c0: f64,
    rng: &mut impl Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(q0 > 0.0) {
        return Err(Error::Domain("input length q0 must be positive".into()));
    }
    if c0.abs() > 1.0 {
        return Err(Error::Domain(format!("initial correlation {c0} outside [-1, 1]")));
    }
    let g1 = DVector::from_fn(width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g2 = DVector::from_fn(width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let e1 = g1.normalize();
    let mut e2 = g2.clone() - &e1 * e1.dot(&g2);
    e2.normalize_mut();
    let scale = (q0 * width as f64).sqrt();
    let x1 = &e1 * scale;
    let x2 = (&e1 * c0 + &e2 * (1.0 - c0 * c0).sqrt()) * scale;
    Ok((x1, x2))
}

fn mean_square(v: &DVector<f64>) -> f64 {
    v.norm_squared() / v.len() as f64
}

/// Correlation of two same-width vectors; identical dot products short-cut
/// to exactly 1 so that a propagated pair with `c⁰ = 1` stays at 1 bitwise.
fn correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d12 = a.dot(b);
    let d11 = a.norm_squared();
    let d22 = b.norm_squared();
    if d12 == d11 && d12 == d22 {
        return 1.0;
    }
    d12 / (d11.sqrt() * d22.sqrt())
}

fn check_finite(h: &DVector<f64>, layer: usize) -> Result<()> {
    if h.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Overflow { layer })
    }
}

/// Propagates one input through `cfg.depth` freshly sampled layers and
/// records the per-layer length `q^l = ‖h^l‖²/N`, layer 0 included.
pub fn forward_single(
    cfg: &NetworkConfig,
    input: &DVector<f64>,
    seed: u64,
    trial: u64,
) -> Result<TrajectoryRecord> {
    if input.len() != cfg.width {
        return Err(Error::Domain(format!(
            "input dimension {} does not match width {}",
            input.len(),
            cfg.width
        )));
    }
    let phi = cfg.activation;
    let mut h = input.clone();
    let mut lengths = Vec::with_capacity(cfg.depth + 1);
    lengths.push(mean_square(&h));
    for layer in 1..=cfg.depth {
        let sample = sample_layer(cfg, &mut substream(seed, trial, layer as u64))?;
        let activated = h.map(|x| phi.phi(x));
        let (_, next) = sample.forward(&activated);
        check_finite(&next, layer)?;
        h = next;
        lengths.push(mean_square(&h));
    }
    Ok(TrajectoryRecord::from_scalars(
        TrajectoryQuantity::Length,
        0,
        lengths,
        RecordSource::Simulation {
            seed,
            trial,
            width: cfg.width,
        },
    ))
}

/// Layer-by-layer lengths and correlation of a propagated input pair.
#[derive(Debug, Clone)]
pub struct PairTrajectories {
    pub length_a: TrajectoryRecord,
    pub length_b: TrajectoryRecord,
    pub correlation: TrajectoryRecord,
}

/// Propagates two given inputs through the same sampled layers.
pub fn forward_pair_inputs(
    cfg: &NetworkConfig,
    x1: &DVector<f64>,
    x2: &DVector<f64>,
    seed: u64,
    trial: u64,
) -> Result<PairTrajectories> {
    if x1.len() != cfg.width || x2.len() != cfg.width {
        return Err(Error::Domain("input dimensions must match the width".into()));
    }
    let phi = cfg.activation;
    let mut h1 = x1.clone();
    let mut h2 = x2.clone();
    let mut q1 = vec![mean_square(&h1)];
    let mut q2 = vec![mean_square(&h2)];
    let mut c12 = vec![correlation(&h1, &h2)];
    for layer in 1..=cfg.depth {
        let sample = sample_layer(cfg, &mut substream(seed, trial, layer as u64))?;
        let (_, next1) = sample.forward(&h1.map(|x| phi.phi(x)));
        let (_, next2) = sample.forward(&h2.map(|x| phi.phi(x)));
        check_finite(&next1, layer)?;
        check_finite(&next2, layer)?;
        h1 = next1;
        h2 = next2;
        q1.push(mean_square(&h1));
        q2.push(mean_square(&h2));
        c12.push(correlation(&h1, &h2));
    }
    let source = RecordSource::Simulation {
        seed,
        trial,
        width: cfg.width,
    };
    Ok(PairTrajectories {
        length_a: TrajectoryRecord::from_scalars(TrajectoryQuantity::Length, 0, q1, source),
        length_b: TrajectoryRecord::from_scalars(TrajectoryQuantity::Length, 0, q2, source),
        correlation: TrajectoryRecord::from_scalars(TrajectoryQuantity::Correlation, 0, c12, source),
    })
}

/// Draws an exact `(q0, c0)` input pair from the trial's input substream and
/// propagates it.
pub fn forward_pair(
    cfg: &NetworkConfig,
    q0: f64,
    c0: f64,
    seed: u64,
    trial: u64,
) -> Result<PairTrajectories> {
    let (x1, x2) = correlated_inputs(cfg.width, q0, c0, &mut substream(seed, trial, 0))?;
    forward_pair_inputs(cfg, &x1, &x2, seed, trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::sim::run_trials;
    use crate::Ensemble;
    use approx::assert_abs_diff_eq;

    fn cfg(
        activation: Activation,
        gamma: f64,
        sigma_alpha2: f64,
        sigma_b2: f64,
        depth: usize,
        width: usize,
    ) -> NetworkConfig {
        NetworkConfig::new(
            gamma,
            sigma_alpha2,
            sigma_b2,
            depth,
            width,
            activation,
            Ensemble::LowRankGaussian,
        )
        .unwrap()
    }

    #[test]
    fn exact_input_construction() {
        let mut rng = substream(11, 0, 0);
        let x = equilibrium_input(300, 0.7, &mut rng);
        assert_abs_diff_eq!(x.norm_squared() / 300.0, 0.7, epsilon = 1e-12);

        let (a, b) = correlated_inputs(300, 0.5, 0.3, &mut rng).unwrap();
        assert_abs_diff_eq!(a.norm_squared() / 300.0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.norm_squared() / 300.0, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(correlation(&a, &b), 0.3, epsilon = 1e-10);
    }

    #[test]
    fn identical_inputs_stay_perfectly_correlated() {
        let c = cfg(Activation::Tanh, 0.25, 6.0, 0.36, 8, 120);
        let run = forward_pair(&c, 0.5, 1.0, 21, 0).unwrap();
        for v in run.correlation.scalars() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn trajectories_are_bit_deterministic() {
        let c = cfg(Activation::Tanh, 0.25, 6.0, 0.36, 6, 80);
        let a = forward_pair(&c, 0.5, 0.4, 33, 2).unwrap();
        let b = forward_pair(&c, 0.5, 0.4, 33, 2).unwrap();
        assert_eq!(a.correlation.values, b.correlation.values);
        assert_eq!(a.length_a.values, b.length_a.values);
        // A different trial draws different layers.
        let other = forward_pair(&c, 0.5, 0.4, 33, 3).unwrap();
        assert_ne!(a.correlation.values, other.correlation.values);
    }

    #[test]
    fn identity_chain_matches_geometric_expectation() {
        // σ_b = 0, identity activation: E[q^l] = (γσ_α²)^l q⁰.
        let gamma_sa2 = 0.8;
        let c = cfg(Activation::Identity, 0.5, gamma_sa2 / 0.5, 0.0, 5, 400);
        let q0 = 1.0;
        let finals: Vec<f64> = run_trials(8, |trial| {
            let input = equilibrium_input(c.width, q0, &mut substream(55, trial, 0));
            let rec = forward_single(&c, &input, 55, trial)?;
            Ok(*rec.scalars().last().unwrap())
        })
        .unwrap();
        let mean = crate::stats::mean(&finals);
        let se = crate::stats::standard_error(&finals);
        let expect = gamma_sa2.powi(5) * q0;
        assert!(
            (mean - expect).abs() <= 3.0 * se.max(1e-3),
            "mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn pythagoras_frame_coefficients_carry_the_norm() {
        let c = cfg(Activation::Tanh, 0.25, 6.0, 0.36, 1, 200);
        let mut rng = substream(77, 0, 0);
        let input = equilibrium_input(c.width, 0.5, &mut rng);
        let layer = sample_layer(&c, &mut substream(77, 0, 1)).unwrap();
        let (z, h) = layer.forward(&input.map(|x| x.tanh()));
        let rel = (h.norm_squared() - z.norm_squared()).abs() / h.norm_squared();
        assert!(rel <= 1e-8, "‖h‖² vs ‖z‖²: rel {rel}");
    }

    #[test]
    fn overflow_reports_the_layer() {
        // Wildly expanding identity chain overflows eventually.
        let c = cfg(Activation::Identity, 1.0, 1e8, 0.0, 300, 10);
        let input = equilibrium_input(c.width, 1.0, &mut substream(5, 0, 0));
        match forward_single(&c, &input, 5, 0) {
            Err(Error::Overflow { layer }) => assert!(layer >= 1),
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
