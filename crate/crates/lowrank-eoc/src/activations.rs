//! Scalar activations φ together with their first two derivatives.
//!
//! Every Gaussian integral in the theory is an integral of φ, φ′ or φ″
//! against the standard normal measure, so these are the only functions the
//! rest of the crate evaluates pointwise.

use crate::error::{Error, Result};

/// Differentiability class of an activation.
///
/// The depth-scale formulas linearise the length map and therefore need φ″;
/// activations that are merely `C0` are rejected by those operations instead
/// of being handed a surrogate second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    C2,
    C0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Erf,
    Identity,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Erf,
        Activation::Identity,
        Activation::Relu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Erf => "erf",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "erf" => Some(Activation::Erf),
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn smoothness(self) -> Smoothness {
        match self {
            Activation::Relu => Smoothness::C0,
            _ => Smoothness::C2,
        }
    }

    /// φ(x)
    pub fn phi(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Erf => libm::erf(x),
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// φ′(x).  For relu the kink value φ′(0) is taken as 0.
    pub fn phi_prime(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Erf => std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp(),
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// φ″(x); errors for `C0` activations.
    pub fn phi_second(self, x: f64) -> Result<f64> {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                Ok(-2.0 * t * (1.0 - t * t))
            }
            Activation::Erf => Ok(-2.0 * x * std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp()),
            Activation::Identity => Ok(0.0),
            Activation::Relu => Err(Error::UnsupportedDerivative {
                family: self.name(),
                order: 2,
            }),
        }
    }

    /// Evaluates φ (order 0), φ′ (order 1) or φ″ (order 2) at `x`.
    pub fn eval(self, order: u8, x: f64) -> Result<f64> {
        match order {
            0 => Ok(self.phi(x)),
            1 => Ok(self.phi_prime(x)),
            2 => self.phi_second(x),
            _ => Err(Error::UnsupportedDerivative {
                family: self.name(),
                order,
            }),
        }
    }

    /// Errors unless the activation is `C2`.
    pub(crate) fn require_c2(self) -> Result<()> {
        match self.smoothness() {
            Smoothness::C2 => Ok(()),
            Smoothness::C0 => Err(Error::UnsupportedDerivative {
                family: self.name(),
                order: 2,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FD_STEP: f64 = 1e-5;
    const FD_TOL: f64 = 1e-6;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
    }

    fn grid() -> impl Iterator<Item = f64> {
        (0..=100).map(|i| -5.0 + 0.1 * i as f64)
    }

    #[test]
    fn phi_prime_matches_finite_difference_on_grid() {
        for act in Activation::ALL {
            for x in grid() {
                if act == Activation::Relu && x.abs() < 0.05 {
                    continue; // kink
                }
                let fd = central_diff(|y| act.phi(y), x);
                assert!(
                    (fd - act.phi_prime(x)).abs() <= FD_TOL,
                    "{} phi' at {x}: fd {fd} vs {}",
                    act.name(),
                    act.phi_prime(x)
                );
            }
        }
    }

    #[test]
    fn phi_second_matches_finite_difference_on_grid() {
        for act in [Activation::Tanh, Activation::Erf, Activation::Identity] {
            for x in grid() {
                let fd = central_diff(|y| act.phi_prime(y), x);
                assert!(
                    (fd - act.phi_second(x).unwrap()).abs() <= FD_TOL,
                    "{} phi'' at {x}",
                    act.name()
                );
            }
        }
    }

    #[test]
    fn eval_dispatches_and_rejects_relu_second_derivative() {
        assert_eq!(Activation::Tanh.eval(0, 0.0).unwrap(), 0.0);
        assert_eq!(Activation::Identity.eval(1, 3.7).unwrap(), 1.0);

        // Cross-check φ″ of tanh at 0.5 against a finite difference of φ′.
        let fd = central_diff(|y| Activation::Tanh.phi_prime(y), 0.5);
        assert_abs_diff_eq!(Activation::Tanh.eval(2, 0.5).unwrap(), fd, epsilon = FD_TOL);

        assert!(matches!(
            Activation::Relu.eval(2, 1.0),
            Err(Error::UnsupportedDerivative { order: 2, .. })
        ));
        assert!(Activation::Tanh.eval(3, 0.0).is_err());
    }

    #[test]
    fn known_point_values() {
        assert_eq!(Activation::Tanh.phi_prime(0.0), 1.0);
        assert_abs_diff_eq!(
            Activation::Erf.phi_prime(0.0),
            2.0 / std::f64::consts::PI.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(Activation::Identity.phi_second(0.3).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn tanh_and_erf_are_odd(x in -5.0f64..5.0) {
            prop_assert_eq!(Activation::Tanh.phi(-x), -Activation::Tanh.phi(x));
            prop_assert_eq!(Activation::Erf.phi(-x), -Activation::Erf.phi(x));
        }

        #[test]
        fn tanh_prime_is_bounded_by_one(x in -20.0f64..20.0) {
            prop_assert!(Activation::Tanh.phi_prime(x).abs() <= 1.0);
        }

        #[test]
        fn relu_is_positively_homogeneous(x in -10.0f64..10.0, a in 1e-3f64..1e3) {
            let lhs = Activation::Relu.phi(a * x);
            let rhs = a * Activation::Relu.phi(x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }
}
