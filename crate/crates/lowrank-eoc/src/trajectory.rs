//! Per-layer records of propagated quantities.

/// What a [`TrajectoryRecord`] tracks layer by layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryQuantity {
    /// Mean squared preactivation length `q^l`.
    Length,
    /// Correlation `c^l` of two propagated inputs.
    Correlation,
    /// Squared norm of the loss gradient with respect to the layer's
    /// coefficient matrix.
    GradientNorm,
    /// Squared singular values of the accumulated input-output Jacobian.
    SingularSpectrum,
}

/// Where a record came from: the analytic recursion or a finite-width run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordSource {
    Theory,
    Simulation { seed: u64, trial: u64, width: usize },
}

/// A per-layer sequence of one propagated quantity.
///
/// `values[i]` belongs to layer `first_layer + i`; scalar quantities store a
/// singleton vector per layer, spectra store all squared singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub quantity: TrajectoryQuantity,
    pub first_layer: usize,
    pub values: Vec<Vec<f64>>,
    pub source: RecordSource,
}

impl TrajectoryRecord {
    pub fn from_scalars(
        quantity: TrajectoryQuantity,
        first_layer: usize,
        scalars: Vec<f64>,
        source: RecordSource,
    ) -> Self {
        Self {
            quantity,
            first_layer,
            values: scalars.into_iter().map(|v| vec![v]).collect(),
            source,
        }
    }

    /// The per-layer values of a scalar record.
    ///
    /// Panics if some layer holds more than one value (i.e. a spectrum).
    pub fn scalars(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| {
                assert_eq!(v.len(), 1, "not a scalar trajectory");
                v[0]
            })
            .collect()
    }

    pub fn layers(&self) -> impl Iterator<Item = usize> + '_ {
        (self.first_layer..).take(self.values.len())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}
