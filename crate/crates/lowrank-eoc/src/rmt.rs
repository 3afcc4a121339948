//! Free-probability machinery for the weight ensembles.
//!
//! The squared singular values of the input-output Jacobian are governed by
//! the S-transform `S(z) = (1+z)/(z·M⁻¹(z))`, where `M(z) = Σ m_k z^{-k}` is
//! built from the moments of a spectral density.  `S` is multiplicative over
//! free products, so the per-layer transforms of `WᵀW` and `D²` give the
//! moments of the depth-`L` product directly:
//!
//! ```text
//! m₁ = (γσ_α²μ₁)^L,
//! m₂ = (γσ_α²μ₁)^{2L} · L · (μ₂/μ₁² + 1/L − 1 − s₁),
//! ```
//!
//! with `μ_k = ∫(φ′(√q* z))^{2k} Dz` and `s₁` the linear coefficient of the
//! normalised series `γσ_α²·S_{WᵀW}`.  Both ensembles admit closed forms
//! (`s₁ = 1 − 1/γ` orthogonal, `s₁ = −1/γ` Gaussian); the density route
//! recomputes them from numerically integrated moments as a cross-check.

use crate::error::{Error, Result};
use crate::meanfield::NetworkConfig;
use crate::quadrature::{gauss_legendre, GaussHermite};
use crate::Ensemble;

/// Tolerance below which a series coefficient is treated as zero.
const COEFF_EPS: f64 = 1e-12;

/// Default truncation order of the S-transform series; only `s₁` feeds the
/// spectrum moments, the higher orders are cross-checks.
pub const DEFAULT_SERIES_ORDER: usize = 8;

/// Truncated power series `a₀ + a₁z + … + a_K z^K` around `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    /// Builds a series from its coefficients (`coeffs[k]` multiplies `z^k`).
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least a constant term");
        Self { coeffs }
    }

    /// The polynomial `coeffs` padded with zeros up to truncation `order`.
    pub fn from_polynomial(coeffs: &[f64], order: usize) -> Self {
        let mut c = coeffs.to_vec();
        c.resize(order + 1, 0.0);
        c.truncate(order + 1);
        Self { coeffs: c }
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let order = self.order().min(rhs.order());
        Self::new((0..=order).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let order = self.order().min(rhs.order());
        Self::new((0..=order).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, rhs: &Self) -> Self {
        let order = self.order().min(rhs.order());
        let mut out = vec![0.0; order + 1];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..=k {
                acc += self.coeff(i) * rhs.coeff(k - i);
            }
            *slot = acc;
        }
        Self::new(out)
    }

    /// Multiplicative inverse `1/f`; requires a nonzero constant term.
    pub fn reciprocal(&self) -> Result<Self> {
        let a0 = self.coeff(0);
        if a0.abs() < COEFF_EPS {
            return Err(Error::Domain(
                "series reciprocal needs a nonzero constant term".into(),
            ));
        }
        let order = self.order();
        let mut out = vec![0.0; order + 1];
        out[0] = 1.0 / a0;
        for k in 1..=order {
            let mut acc = 0.0;
            for i in 1..=k {
                acc += self.coeff(i) * out[k - i];
            }
            out[k] = -acc / a0;
        }
        Ok(Self::new(out))
    }

    /// Composition `f ∘ g`; `g` must have zero constant term.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if inner.coeff(0).abs() > COEFF_EPS {
            return Err(Error::Domain(
                "series composition needs a vanishing inner constant term".into(),
            ));
        }
        let order = self.order().min(inner.order());
        let mut result = Self::from_polynomial(&[self.coeff(order)], order);
        for k in (0..order).rev() {
            result = result.mul(inner);
            result.coeffs[0] += self.coeff(k);
        }
        Ok(result)
    }

    /// Compositional inverse (Lagrange reversion): the series `g` with
    /// `f(g(z)) = z` up to the truncation order.  Requires `f(0) = 0` and
    /// `f′(0) ≠ 0`.
    pub fn revert(&self) -> Result<Self> {
        if self.coeff(0).abs() > COEFF_EPS {
            return Err(Error::ReversionFailure(
                "constant term must vanish".into(),
            ));
        }
        let f1 = self.coeff(1);
        if f1.abs() < COEFF_EPS {
            return Err(Error::ReversionFailure(
                "linear coefficient vanishes".into(),
            ));
        }
        let order = self.order();
        let mut g = Self::from_polynomial(&[0.0, 1.0 / f1], order);
        for n in 2..=order {
            let residual = self.compose(&g)?.coeff(n);
            g.coeffs[n] = -residual / f1;
        }
        Ok(g)
    }
}

/// Closed-form `s₁` of the normalised weight S-transform.
pub fn s1_closed_form(ensemble: Ensemble, gamma: f64) -> f64 {
    match ensemble {
        Ensemble::LowRankOrthogonal => 1.0 - 1.0 / gamma,
        Ensemble::LowRankGaussian => -1.0 / gamma,
    }
}

/// Closed-form series of `S_{WᵀW}(z)` around 0:
///
/// * orthogonal: `γ⁻¹σ_α⁻² (1+z)/(1+γ⁻¹z)`,
/// * Gaussian:   `γ⁻¹σ_α⁻² (1+z)/(1 + z(1+γ⁻¹) + γ⁻¹z²)`.
pub fn s_transform(
    ensemble: Ensemble,
    gamma: f64,
    sigma_alpha2: f64,
    order: usize,
) -> Result<PowerSeries> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma {gamma} outside (0, 1]")));
    }
    if !(sigma_alpha2 > 0.0) {
        return Err(Error::Domain("sigma_alpha2 must be positive".into()));
    }
    if order < 1 {
        return Err(Error::Domain("series order must be at least 1".into()));
    }
    let inv_gamma = 1.0 / gamma;
    let numerator = PowerSeries::from_polynomial(&[1.0, 1.0], order);
    let denominator = match ensemble {
        Ensemble::LowRankOrthogonal => PowerSeries::from_polynomial(&[1.0, inv_gamma], order),
        Ensemble::LowRankGaussian => {
            PowerSeries::from_polynomial(&[1.0, 1.0 + inv_gamma, inv_gamma], order)
        }
    };
    Ok(numerator
        .mul(&denominator.reciprocal()?)
        .scale(inv_gamma / sigma_alpha2))
}

/// Marčenko-Pastur-type bulk of `WᵀW` for the Gaussian ensemble: support
/// `σ_α²·[(1−√γ)², (1+√γ)²]`, total bulk mass `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpBulk {
    /// Variance scale `σ_α²`.
    pub scale: f64,
    /// Rank ratio `γ`.
    pub shape: f64,
    /// `[λ⁻, λ⁺]`.
    pub support: (f64, f64),
    pub mass: f64,
}

impl MpBulk {
    pub fn new(gamma: f64, sigma_alpha2: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma {gamma} outside (0, 1]")));
        }
        if !(sigma_alpha2 > 0.0) {
            return Err(Error::Domain("sigma_alpha2 must be positive".into()));
        }
        let root = gamma.sqrt();
        Ok(Self {
            scale: sigma_alpha2,
            shape: gamma,
            support: (
                sigma_alpha2 * (1.0 - root) * (1.0 - root),
                sigma_alpha2 * (1.0 + root) * (1.0 + root),
            ),
            mass: gamma,
        })
    }

    /// Bulk density value at `lam`; zero outside the open support.
    pub fn density(&self, lam: f64) -> f64 {
        let (lo, hi) = self.support;
        if lam <= lo || lam >= hi {
            return 0.0;
        }
        ((hi - lam) * (lam - lo)).sqrt() / (2.0 * std::f64::consts::PI * lam * self.scale)
    }

    /// `∫ g(λ) ρ_bulk(λ) dλ` by Gauss-Legendre after the trigonometric
    /// substitution `λ = c + h·cosθ`, which absorbs the square-root edge
    /// factors (and the `1/λ` endpoint at `γ = 1`) into a smooth integrand.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi) = self.support;
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let (nodes, weights) = gauss_legendre(256);
        let mut acc = 0.0;
        for (&t, &w) in nodes.iter().zip(&weights) {
            // t ∈ [-1, 1] → θ ∈ [0, π]
            let theta = 0.5 * std::f64::consts::PI * (t + 1.0);
            let lam = center + half * theta.cos();
            let sin = theta.sin();
            acc += w * sin * sin * g(lam) / lam;
        }
        acc *= 0.5 * std::f64::consts::PI; // |dθ/dt|
        acc * half * half / (2.0 * std::f64::consts::PI * self.scale)
    }

    /// `∫_{λ⁻}^{lam} ρ_bulk`; the left edge singularity is removed by the
    /// substitution `t = λ⁻ + (lam−λ⁻)u²`.
    pub fn cdf(&self, lam: f64) -> f64 {
        let (lo, hi) = self.support;
        if lam <= lo {
            return 0.0;
        }
        if lam >= hi {
            return self.mass;
        }
        let span = lam - lo;
        let (nodes, weights) = gauss_legendre(400);
        let mut acc = 0.0;
        for (&x, &w) in nodes.iter().zip(&weights) {
            let u = 0.5 * (x + 1.0);
            let t = lo + span * u * u;
            if t <= 0.0 {
                continue; // u = 0 endpoint when λ⁻ = 0; zero measure
            }
            acc += w * 0.5 * u * u * (hi - t).sqrt() / t;
        }
        acc * span.powf(1.5) / (std::f64::consts::PI * self.scale)
    }
}

/// Spectral law made of point masses plus an optional Marčenko-Pastur bulk.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicPlusBulkDensity {
    /// `(location, mass)` pairs.
    pub atoms: Vec<(f64, f64)>,
    pub bulk: Option<MpBulk>,
}

impl AtomicPlusBulkDensity {
    pub fn point_mass(location: f64) -> Self {
        Self {
            atoms: vec![(location, 1.0)],
            bulk: None,
        }
    }

    /// The spectral density of `WᵀW` for the given ensemble.
    pub fn for_ensemble(ensemble: Ensemble, gamma: f64, sigma_alpha2: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma {gamma} outside (0, 1]")));
        }
        if !(sigma_alpha2 > 0.0) {
            return Err(Error::Domain("sigma_alpha2 must be positive".into()));
        }
        let mut atoms = Vec::new();
        if gamma < 1.0 {
            atoms.push((0.0, 1.0 - gamma));
        }
        match ensemble {
            Ensemble::LowRankOrthogonal => {
                atoms.push((sigma_alpha2, gamma));
                Ok(Self { atoms, bulk: None })
            }
            Ensemble::LowRankGaussian => Ok(Self {
                atoms,
                bulk: Some(MpBulk::new(gamma, sigma_alpha2)?),
            }),
        }
    }

    /// k-th moment `∫ λ^k dρ`, atoms exactly plus the bulk by quadrature.
    pub fn moment(&self, k: usize) -> f64 {
        let mut acc: f64 = self
            .atoms
            .iter()
            .map(|&(loc, mass)| mass * loc.powi(k as i32))
            .sum();
        if let Some(bulk) = &self.bulk {
            acc += bulk.integrate(|lam| lam.powi(k as i32));
        }
        acc
    }

    /// Numerically integrated total mass (atoms plus bulk).
    pub fn total_mass(&self) -> f64 {
        self.moment(0)
    }
}

/// Bulk density of the Gaussian-ensemble `WᵀW` law at `lam` (the atom at 0 is
/// reported separately by [`AtomicPlusBulkDensity`]).
pub fn mp_density_eval(gamma: f64, sigma_alpha2: f64, lam: f64) -> f64 {
    match MpBulk::new(gamma, sigma_alpha2) {
        Ok(bulk) => bulk.density(lam),
        Err(_) => 0.0,
    }
}

/// Rebuilds the S-transform series from numerically integrated moments:
/// `M` as a series in `1/z`, series reversion for `M⁻¹`, then
/// `S(z) = (1+z)/(z·M⁻¹(z))`.
pub fn s_transform_from_density(
    density: &AtomicPlusBulkDensity,
    order: usize,
) -> Result<PowerSeries> {
    if order < 1 {
        return Err(Error::Domain("series order must be at least 1".into()));
    }
    // M(z) = Σ_{k≥1} m_k z^{-k};  with w = 1/z this is the ordinary series
    // M̃(w) = Σ m_k w^k, and M⁻¹(z) = 1/M̃⁻¹(z).
    let mut m_tilde = vec![0.0];
    for k in 1..=order + 1 {
        m_tilde.push(density.moment(k));
    }
    if m_tilde[1].abs() < COEFF_EPS {
        return Err(Error::ReversionFailure(
            "first moment vanishes; M is not invertible".into(),
        ));
    }
    let reverted = PowerSeries::new(m_tilde).revert()?;
    // z·M⁻¹(z) = z / M̃⁻¹(z), so S = (1+z)·(M̃⁻¹(z)/z).
    let shifted = PowerSeries::new(reverted.coeffs()[1..].to_vec());
    Ok(PowerSeries::from_polynomial(&[1.0, 1.0], order).mul(&shifted))
}

/// Provenance of a set of spectrum moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    Analytic,
    Empirical,
}

/// First two moments of the `JJᵀ` spectrum and their spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumMoments {
    pub m1: f64,
    pub m2: f64,
    /// `m₂ − m₁²`.
    pub variance: f64,
    pub source: MomentSource,
    pub depth: usize,
}

impl SpectrumMoments {
    /// Moments of an empirical eigenvalue set (zeros included).
    pub fn from_eigenvalues(eigenvalues: &[f64], depth: usize) -> Self {
        let n = eigenvalues.len() as f64;
        let m1 = eigenvalues.iter().sum::<f64>() / n;
        let m2 = eigenvalues.iter().map(|l| l * l).sum::<f64>() / n;
        Self {
            m1,
            m2,
            variance: m2 - m1 * m1,
            source: MomentSource::Empirical,
            depth,
        }
    }
}

/// Analytic moments of the depth-`L` Jacobian spectrum at the length fixed
/// point `q*`.
pub fn jacobian_moments_analytic(
    cfg: &NetworkConfig,
    rule: &GaussHermite,
    q_star: f64,
) -> Result<SpectrumMoments> {
    if !(q_star >= 0.0) {
        return Err(Error::Domain(format!("q* {q_star} must be nonnegative")));
    }
    let phi = cfg.activation;
    let s = q_star.sqrt();
    let mu1 = rule.integrate(|z| phi.phi_prime(s * z).powi(2))?;
    let mu2 = rule.integrate(|z| phi.phi_prime(s * z).powi(4))?;
    if mu1 <= COEFF_EPS {
        return Err(Error::DegenerateSpectrum(format!(
            "μ₁ = {mu1} at q* = {q_star}"
        )));
    }
    let depth = cfg.depth;
    let l = depth as f64;
    let chi = cfg.gamma_sigma_alpha2() * mu1;
    let s1 = s1_closed_form(cfg.ensemble, cfg.gamma);
    let m1 = chi.powi(depth as i32);
    let m2 = chi.powi(2 * depth as i32) * l * (mu2 / (mu1 * mu1) + 1.0 / l - 1.0 - s1);
    Ok(SpectrumMoments {
        m1,
        m2,
        variance: m2 - m1 * m1,
        source: MomentSource::Analytic,
        depth,
    })
}
