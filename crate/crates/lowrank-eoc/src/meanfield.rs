//! Infinite-width theory of low-rank networks.
//!
//! With rank ratio `γ`, coefficient variance `σ_α²` and bias variance `σ_b²`,
//! the preactivation length and the covariance of two propagated inputs obey
//!
//! ```text
//! q^l    = γ(σ_α² ∫ φ²(√q^{l-1} z) Dz + σ_b²)                      (length map 𝒱)
//! q12^l  = γ(σ_α² ∫∫ φ(u₁)φ(u₂) Dz₁Dz₂ + σ_b²)                     (covariance map)
//! ```
//!
//! with `u₁ = √q11·z₁`, `u₂ = √q22·(c·z₁ + √(1−c²)·z₂)`.  Everything here —
//! fixed points, the slope `χ_γ = γσ_α² ∫ (φ′(√q* z))² Dz`, the critical
//! curve `χ_γ = 1` and the depth scales — only depends on the products
//! `γσ_α²` and `γσ_b²`, which is the low-rank reduction to the full-rank
//! theory.

use std::ops::RangeInclusive;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::trajectory::{RecordSource, TrajectoryQuantity, TrajectoryRecord};
use crate::Ensemble;

/// Hyperparameters of one network family.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Rank-to-width ratio `γ ∈ (0, 1]`.
    pub gamma: f64,
    /// Variance scale `σ_α²` of the frame coefficients.
    pub sigma_alpha2: f64,
    /// Bias variance `σ_b²`.
    pub sigma_b2: f64,
    /// Number of layers `L`.
    pub depth: usize,
    /// Constant layer width `N`.
    pub width: usize,
    pub activation: Activation,
    pub ensemble: Ensemble,
}

impl NetworkConfig {
    pub fn new(
        gamma: f64,
        sigma_alpha2: f64,
        sigma_b2: f64,
        depth: usize,
        width: usize,
        activation: Activation,
        ensemble: Ensemble,
    ) -> Result<Self> {
        let cfg = Self {
            gamma,
            sigma_alpha2,
            sigma_b2,
            depth,
            width,
            activation,
            ensemble,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.sigma_alpha2 >= 0.0) || !(self.sigma_b2 >= 0.0) {
            return Err(Error::Domain("variances must be nonnegative".into()));
        }
        if self.depth < 1 {
            return Err(Error::Domain("depth must be at least 1".into()));
        }
        if self.width < 1 {
            return Err(Error::Domain("width must be at least 1".into()));
        }
        let r = self.rank();
        if r < 1 || r > self.width {
            return Err(Error::Domain(format!(
                "rank {} outside [1, {}] (gamma {}, width {})",
                r, self.width, self.gamma, self.width
            )));
        }
        Ok(())
    }

    /// Layer rank `r = round(γ·N)`.
    pub fn rank(&self) -> usize {
        (self.gamma * self.width as f64).round() as usize
    }

    pub fn gamma_sigma_alpha2(&self) -> f64 {
        self.gamma * self.sigma_alpha2
    }

    pub fn gamma_sigma_b2(&self) -> f64 {
        self.gamma * self.sigma_b2
    }

    /// The full-rank configuration `(1, γσ_α², γσ_b²)` with identical
    /// infinite-width behaviour.
    pub fn rescaled_to_full_rank(&self) -> Self {
        Self {
            gamma: 1.0,
            sigma_alpha2: self.gamma_sigma_alpha2(),
            sigma_b2: self.gamma_sigma_b2(),
            ..self.clone()
        }
    }
}

/// Outcome of the `q*`/`c*` solves.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub q_star: f64,
    pub c_star: f64,
    pub chi: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// E-folding lengths (in layers) of perturbations around the fixed points;
/// `+∞` at criticality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthScales {
    pub xi_q: f64,
    pub xi_c: f64,
    pub xi_grad: f64,
}

/// Phase of the correlation dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Ordered,
    Chaotic,
    Critical,
}

impl Phase {
    /// Classifies by the slope `χ_γ`; values within `1e-9` of 1 count as
    /// critical.
    pub fn from_chi(chi: f64) -> Self {
        if (chi - 1.0).abs() <= 1e-9 {
            Phase::Critical
        } else if chi < 1.0 {
            Phase::Ordered
        } else {
            Phase::Chaotic
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Ordered => "ordered",
            Phase::Chaotic => "chaotic",
            Phase::Critical => "critical",
        }
    }
}

/// One point of the critical curve, in the `γ`-rescaled coordinates
/// `(γσ_α², γσ_b²)` shared by every rank ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EocPoint {
    pub gamma: f64,
    pub gamma_sigma_alpha2: f64,
    pub gamma_sigma_b2: f64,
    pub q_star: f64,
}

impl EocPoint {
    pub fn sigma_alpha2(&self) -> f64 {
        self.gamma_sigma_alpha2 / self.gamma
    }

    pub fn sigma_b2(&self) -> f64 {
        self.gamma_sigma_b2 / self.gamma
    }
}

/// Controls for the Picard fixed-point iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub q_init: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            q_init: 1.0,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Iterations after which the plain Picard iteration switches to a damped
/// update; covers slowly contracting cases near criticality.
const DAMPING_THRESHOLD: usize = 200;

/// Iterates beyond this magnitude are treated as divergent.
const DIVERGENCE_BOUND: f64 = 1e100;

/// `𝒱(q) = γ(σ_α² ∫ φ²(√q z) Dz + σ_b²)`.
pub fn length_map(cfg: &NetworkConfig, rule: &GaussHermite, q_prev: f64) -> Result<f64> {
    if !(q_prev >= 0.0) {
        return Err(Error::Domain(format!("length {q_prev} must be nonnegative")));
    }
    let phi = cfg.activation;
    // q → 0 limit: the integrand is the constant φ(0)².
    if q_prev == 0.0 {
        return Ok(cfg.gamma_sigma_alpha2() * phi.phi(0.0).powi(2) + cfg.gamma_sigma_b2());
    }
    let s = q_prev.sqrt();
    let integral = rule.integrate(|z| phi.phi(s * z).powi(2))?;
    Ok(cfg.gamma_sigma_alpha2() * integral + cfg.gamma_sigma_b2())
}

/// Next-layer covariance `γ(σ_α² ∫∫ φ(u₁)φ(u₂) Dz₁Dz₂ + σ_b²)`.
pub fn covariance_map(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q11: f64,
    q22: f64,
    q12: f64,
) -> Result<f64> {
    if !(q11 > 0.0 && q22 > 0.0) {
        return Err(Error::Domain(format!(
            "covariance map needs positive lengths, got ({q11}, {q22})"
        )));
    }
    let bound = (q11 * q22).sqrt();
    if q12.abs() > bound * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "covariance {q12} violates the Cauchy-Schwarz bound {bound}"
        )));
    }
    let c = (q12 / bound).clamp(-1.0, 1.0);
    let phi = cfg.activation;
    let integral = rule.integrate_pair(|u1, u2| phi.phi(u1) * phi.phi(u2), q11, q22, c)?;
    Ok(cfg.gamma_sigma_alpha2() * integral + cfg.gamma_sigma_b2())
}

/// Correlation map at the length fixed point: `covariance_map(q*, q*, c·q*)/q*`.
///
/// `c_prev = 1` is the correlation of an input paired with itself and is
/// returned as exactly 1.
pub fn correlation_map(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q_star: f64,
    c_prev: f64,
) -> Result<f64> {
    if !(q_star > 0.0) {
        return Err(Error::Domain(format!(
            "correlation map needs a positive fixed point, got {q_star}"
        )));
    }
    if c_prev.abs() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("correlation {c_prev} outside [-1, 1]")));
    }
    if c_prev == 1.0 {
        return Ok(1.0);
    }
    Ok(covariance_map(cfg, rule, q_star, q_star, c_prev * q_star)? / q_star)
}

/// Solves `𝒱(q) = q` by Picard iteration with automatic damping.
///
/// With `σ_b² = 0` and `φ(0) = 0` the origin is a fixed point; it is returned
/// exactly whenever it is stable (`γσ_α²·φ′(0)² ≤ 1`) or explicitly requested
/// via `q_init = 0`.
pub fn solve_q_star(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    opts: &SolveOptions,
) -> Result<(f64, usize, f64)> {
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let origin_fixed = cfg.sigma_b2 == 0.0 && cfg.activation.phi(0.0) == 0.0;
    if origin_fixed {
        let slope0 = cfg.gamma_sigma_alpha2() * cfg.activation.phi_prime(0.0).powi(2);
        if slope0 <= 1.0 || opts.q_init == 0.0 {
            return Ok((0.0, 0, 0.0));
        }
    } else if !(opts.q_init > 0.0) {
        return Err(Error::Domain(
            "q_init must be positive when the origin is not a fixed point".into(),
        ));
    }

    let mut q = opts.q_init;
    let mut damped = false;
    for it in 1..=opts.max_iter {
        let image = length_map(cfg, rule, q)?;
        let next = if damped { 0.5 * (q + image) } else { image };
        let delta = (next - q).abs();
        q = next;
        if !q.is_finite() || q > DIVERGENCE_BOUND {
            return Err(Error::NoConvergence {
                iterations: it,
                last: q,
                residual: f64::INFINITY,
            });
        }
        if delta <= opts.tol {
            let residual = (length_map(cfg, rule, q)? - q).abs();
            return Ok((q, it, residual));
        }
        if it == DAMPING_THRESHOLD {
            damped = true;
        }
    }
    let residual = (length_map(cfg, rule, q)? - q).abs();
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last: q,
        residual,
    })
}

/// Slope of the correlation map at `c = 1`:
/// `χ_γ = γσ_α² ∫ (φ′(√q* z))² Dz`.
pub fn chi(cfg: &NetworkConfig, rule: &GaussHermite, q_star: f64) -> Result<f64> {
    if !(q_star >= 0.0) {
        return Err(Error::Domain(format!("q* {q_star} must be nonnegative")));
    }
    let phi = cfg.activation;
    // q* → 0 limit: constant integrand φ′(0)².
    if q_star == 0.0 {
        return Ok(cfg.gamma_sigma_alpha2() * phi.phi_prime(0.0).powi(2));
    }
    let s = q_star.sqrt();
    let integral = rule.integrate(|z| phi.phi_prime(s * z).powi(2))?;
    Ok(cfg.gamma_sigma_alpha2() * integral)
}

/// Stable correlation fixed point: 1 in the ordered phase (`χ ≤ 1`), the
/// interior point reached by Picard iteration from `c = 0` otherwise.
pub fn solve_c_star(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q_star: f64,
    tol: f64,
) -> Result<f64> {
    if !(q_star > 0.0) {
        return Err(Error::Domain(format!(
            "c* needs a positive length fixed point, got {q_star}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if chi(cfg, rule, q_star)? <= 1.0 {
        return Ok(1.0);
    }
    let max_iter = SolveOptions::default().max_iter;
    let mut c = 0.0;
    for it in 1..=max_iter {
        let next = correlation_map(cfg, rule, q_star, c)?.clamp(-1.0, 1.0);
        let delta = (next - c).abs();
        c = next;
        if delta <= tol {
            return Ok(c);
        }
        let _ = it;
    }
    let residual = (correlation_map(cfg, rule, q_star, c)? - c).abs();
    Err(Error::NoConvergence {
        iterations: max_iter,
        last: c,
        residual,
    })
}

/// Solves `q*`, evaluates `χ_γ` and the stable `c*`, and bundles the
/// diagnostics.
pub fn fixed_point_report(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    opts: &SolveOptions,
) -> Result<FixedPointReport> {
    let (q_star, iterations, residual) = solve_q_star(cfg, rule, opts)?;
    let chi_value = chi(cfg, rule, q_star)?;
    let c_star = if q_star > 0.0 {
        solve_c_star(cfg, rule, q_star, opts.tol)?
    } else {
        // Degenerate fixed point at the origin: any two inputs collapse onto
        // it, so the correlation fixed point is 1 by convention.
        1.0
    };
    Ok(FixedPointReport {
        q_star,
        c_star,
        chi: chi_value,
        iterations,
        residual,
    })
}

fn scale_from_slope(slope: f64) -> Result<f64> {
    if !(slope > 0.0) {
        return Err(Error::NonPositiveLogArgument { argument: slope });
    }
    // Slopes within quadrature accuracy of 1 are critical: the scale
    // diverges.
    if (slope - 1.0).abs() <= 1e-12 {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0 / slope.ln().abs())
    }
}

/// Depth scales of the three propagated quantities.
///
/// `ξ_c = ξ_Δ = 1/|log χ_γ|` and
/// `ξ_q = 1/|log(χ_γ + γσ_α² ∫ φ″(√q* z) φ(√q* z) Dz)|`, all `+∞` when the
/// corresponding slope is exactly 1.  The magnitude is reported in both
/// phases: it is the e-folding length of decay (ordered) or growth (chaotic).
pub fn depth_scales(cfg: &NetworkConfig, rule: &GaussHermite, q_star: f64) -> Result<DepthScales> {
    cfg.activation.require_c2()?;
    let chi_value = chi(cfg, rule, q_star)?;
    let phi = cfg.activation;
    let s = q_star.sqrt();
    let curvature = if q_star == 0.0 {
        phi.phi_second(0.0)? * phi.phi(0.0)
    } else {
        rule.integrate(|z| phi.phi_second(s * z).expect("C2 checked above") * phi.phi(s * z))?
    };
    let xi_c = scale_from_slope(chi_value)?;
    let xi_q = scale_from_slope(chi_value + cfg.gamma_sigma_alpha2() * curvature)?;
    Ok(DepthScales {
        xi_q,
        xi_c,
        xi_grad: xi_c,
    })
}

/// Critical curve `χ_γ = 1`, parametrised by the fixed point `q*`.
///
/// Each grid value `q*` yields `γσ_α² = 1/∫(φ′(√q* z))² Dz` and
/// `γσ_b² = q* − γσ_α² ∫ φ²(√q* z) Dz`; points with negative bias variance
/// are dropped, and coincident points (the identity activation collapses the
/// whole curve onto `(1, 0)`) are deduplicated.
pub fn eoc_curve(
    activation: Activation,
    gamma: f64,
    rule: &GaussHermite,
    q_grid: &[f64],
) -> Result<Vec<EocPoint>> {
    activation.require_c2()?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma {gamma} outside (0, 1]")));
    }
    let mut points: Vec<EocPoint> = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("EOC grid value {q} must be positive")));
        }
        let s = q.sqrt();
        let mu1 = rule.integrate(|z| activation.phi_prime(s * z).powi(2))?;
        if mu1 <= 0.0 {
            return Err(Error::DegenerateSpectrum(format!(
                "∫(φ′)² vanishes at q* = {q}"
            )));
        }
        let gsa = 1.0 / mu1;
        let phi_sq = rule.integrate(|z| activation.phi(s * z).powi(2))?;
        let mut gsb = q - gsa * phi_sq;
        if gsb < 0.0 {
            if gsb < -1e-10 {
                continue;
            }
            gsb = 0.0;
        }
        let candidate = EocPoint {
            gamma,
            gamma_sigma_alpha2: gsa,
            gamma_sigma_b2: gsb,
            q_star: q,
        };
        let duplicate = points.iter().any(|p| {
            (p.gamma_sigma_alpha2 - gsa).abs() <= 1e-10 && (p.gamma_sigma_b2 - gsb).abs() <= 1e-10
        });
        if !duplicate {
            points.push(candidate);
        }
    }
    Ok(points)
}

/// Backpropagated gradient-variance ratios `q̃^l/q̃^L = χ_γ^{L−l}` for the
/// requested layers (constant width).
pub fn gradient_norm_theory(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q_star: f64,
    layers: RangeInclusive<usize>,
) -> Result<TrajectoryRecord> {
    let depth = cfg.depth;
    if *layers.end() > depth {
        return Err(Error::Domain(format!(
            "layer range ends at {} but depth is {depth}",
            layers.end()
        )));
    }
    let chi_value = chi(cfg, rule, q_star)?;
    let first = *layers.start();
    let ratios: Vec<f64> = layers
        .map(|l| chi_value.powi((depth - l) as i32))
        .collect();
    Ok(TrajectoryRecord::from_scalars(
        TrajectoryQuantity::GradientNorm,
        first,
        ratios,
        RecordSource::Theory,
    ))
}

/// Iterates the length map `layers` times from `q0`, returning
/// `q^0, …, q^layers`.
pub fn length_trajectory(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q0: f64,
    layers: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layers + 1);
    let mut q = q0;
    out.push(q);
    for _ in 0..layers {
        q = length_map(cfg, rule, q)?;
        out.push(q);
    }
    Ok(out)
}

/// Iterates the correlation map `layers` times from `c0` at the length fixed
/// point `q*`, returning `c^0, …, c^layers`.
pub fn correlation_trajectory(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q_star: f64,
    c0: f64,
    layers: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layers + 1);
    let mut c = c0;
    out.push(c);
    for _ in 0..layers {
        c = correlation_map(cfg, rule, q_star, c)?.clamp(-1.0, 1.0);
        out.push(c);
    }
    Ok(out)
}
