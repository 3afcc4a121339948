//! Finite-width Monte-Carlo laboratory.
//!
//! Samples low-rank layers `W = C·A` with bias `b·(C₁+…+C_r)`, propagates
//! inputs, accumulates input-output Jacobians and backpropagates the
//! sum-of-squares loss — the empirical counterpart of every analytic
//! quantity in [`crate::meanfield`] and [`crate::rmt`].
//!
//! Randomness is split into counter-derived substreams keyed by
//! `(root seed, trial, layer)` (layer 0 is the input draw), so trials can run
//! in parallel and still reproduce bit-identically in any order.

mod backprop;
mod forward;
mod jacobian;
mod weights;

pub use backprop::{backprop_gradient_norms, SampledNetwork};
pub use forward::{
    correlated_inputs, equilibrium_input, forward_pair, forward_pair_inputs, forward_single,
    sample_layer, LayerSample, PairTrajectories,
};
pub use jacobian::{
    jacobian_spectra_at_depths, jacobian_spectrum, mean_sq_singular_per_layer, SpectrumSnapshot,
};
pub use weights::{sample_weights, LowRankWeights};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::Result;

/// Independent generator for `(seed, trial, layer)`; layer 0 is reserved for
/// input construction.
pub fn substream(seed: u64, trial: u64, layer: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((trial << 32) | (layer & 0xffff_ffff));
    rng
}

/// Runs `trials` independent trials (in parallel when a rayon pool is
/// available) and collects their results in trial order.
pub fn run_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}
