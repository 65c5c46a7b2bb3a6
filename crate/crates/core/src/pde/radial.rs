//! The limiting bubble and its one-dimensional checks.
//!
//! For `w(x) = g(F°(x))` one has `F(∇w) = |g'|` and
//! `Fⁿ⁻¹(∇w) F_ξ(∇w) = |g'|ⁿ⁻² g' x / F°(x)`, and since `x·∇F°(x) = F°(x)`
//! the divergence of `h(r) x / r` is `r¹⁻ⁿ (rⁿ⁻¹ h)'`. The operator thus
//! reduces to `−r¹⁻ⁿ (rⁿ⁻¹ |g'|ⁿ⁻² g')'` for every norm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::quad;

#[derive(Debug, Clone)]
pub struct RadialFunction {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub norm: FinslerNorm,
}

impl RadialFunction {
    pub fn new(radii: Vec<f64>, values: Vec<f64>, norm: &FinslerNorm) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 3 {
            return Err(Error::InvalidInput("radial grid needs at least three points".into()));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("radii must be nonnegative and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("radial values must be finite".into()));
        }
        Ok(Self { radii, values, norm: norm.clone() })
    }
}

/// Constants `(n, κ_n, λ_n)` of a norm.
pub(crate) fn constants(norm: &FinslerNorm) -> Result<(f64, f64, f64)> {
    Ok((norm.dim() as f64, norm.kappa()?, norm.lambda_n()?))
}

/// `−((n−1)/λ_n) log(1 + κ^{1/(n−1)} r^{n/(n−1)})`.
pub fn bubble_profile(n: f64, kappa: f64, lambda: f64, r: f64) -> f64 {
    -((n - 1.0) / lambda) * (kappa.powf(1.0 / (n - 1.0)) * r.powf(n / (n - 1.0))).ln_1p()
}

pub fn bubble(norm: &FinslerNorm, radii: &[f64]) -> Result<RadialFunction> {
    let (n, kappa, lambda) = constants(norm)?;
    let values = radii.iter().map(|&r| bubble_profile(n, kappa, lambda, r)).collect();
    RadialFunction::new(radii.to_vec(), values, norm)
}

/// Largest `|−r¹⁻ⁿ(rⁿ⁻¹|w'|ⁿ⁻²w')' − e^{(n/(n−1))λ_n w}|` over interior radii,
/// with fluxes at half-points from centered differences.
pub fn bubble_residual(w: &RadialFunction) -> Result<f64> {
    let (n, _, lambda) = constants(&w.norm)?;
    let r = &w.radii;
    let v = &w.values;
    let flux = |i: usize| {
        let rm = 0.5 * (r[i] + r[i + 1]);
        let d = (v[i + 1] - v[i]) / (r[i + 1] - r[i]);
        rm.powf(n - 1.0) * d.abs().powf(n - 2.0) * d
    };
    let mut worst = 0.0f64;
    for i in 1..r.len() - 1 {
        if r[i] <= 0.0 {
            continue;
        }
        let width = 0.5 * (r[i + 1] - r[i - 1]);
        let op = -(flux(i) - flux(i - 1)) / (width * r[i].powf(n - 1.0));
        let rhs = (n / (n - 1.0) * lambda * v[i]).exp();
        worst = worst.max((op - rhs).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleMass {
    /// `nκ_n ∫₀^R e^{(n/(n−1))λ_n w} rⁿ⁻¹ dr` by adaptive quadrature.
    pub inner: f64,
    /// Upper bound `(n−1) κ^{−1/(n−1)} R^{−n/(n−1)}` for the mass beyond `R`.
    pub tail_bound: f64,
    pub total: f64,
}

/// Mass of `e^{(n/(n−1))λ_n w}` inside the Wulff ball of radius `r_max`.
pub fn bubble_partial_mass(norm: &FinslerNorm, r_max: f64) -> Result<f64> {
    let (n, kappa, lambda) = constants(norm)?;
    if !(r_max > 0.0) {
        return Ok(0.0);
    }
    // integrate in s = log r; below r = 1e-12 the mass is below κ·1e-24
    let lo = 1e-12f64.min(r_max * 1e-6).ln();
    let hi = r_max.ln();
    let integrand = |s: f64| {
        let r = s.exp();
        n * kappa * (n / (n - 1.0) * lambda * bubble_profile(n, kappa, lambda, r)).exp() * r.powf(n)
    };
    let breaks: Vec<f64> = (0..=16).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
    Ok(quad::adaptive_with_breaks(integrand, &breaks, 1e-14, 1e-13).0)
}

pub fn bubble_mass(norm: &FinslerNorm, r_max: f64) -> Result<BubbleMass> {
    let (n, kappa, _) = constants(norm)?;
    let inner = bubble_partial_mass(norm, r_max)?;
    let tail_bound = (n - 1.0) * kappa.powf(-1.0 / (n - 1.0)) * r_max.powf(-n / (n - 1.0));
    Ok(BubbleMass { inner, tail_bound, total: inner + tail_bound })
}
