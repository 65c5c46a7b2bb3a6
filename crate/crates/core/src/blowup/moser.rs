//! Concentrating Moser-type test functions glued to the first eigenfunction.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::hybrid::{smoothstep, Field, Hybrid, Probe};
use super::{default_sub, FamilyRow};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction};
use crate::mt::{JValue, MtConfig, EXPONENT_CAP};
use crate::pde::EigenPair;
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoserParams {
    pub epsilon: f64,
    /// Defaults to [`default_t_eps`].
    pub t_eps: Option<f64>,
    /// Concentration point.
    pub x0: Vec<f64>,
}

impl MoserParams {
    pub fn new(epsilon: f64, dim: usize) -> Self {
        Self { epsilon, t_eps: None, x0: vec![0.0; dim] }
    }
}

/// `(log 1/ε)^{−(2n+1)/(2n(n+1))}`, inside the window where `tⁿ log(1/ε) → ∞` and `tⁿ⁺¹ log(1/ε) → 0`.
pub fn default_t_eps(n: usize, epsilon: f64) -> f64 {
    let n = n as f64;
    (1.0 / epsilon).ln().powf(-(2.0 * n + 1.0) / (2.0 * n * (n + 1.0)))
}

struct MoserField {
    core: f64,
    t: f64,
    phi_delta: f64,
    eps: f64,
    delta: f64,
    phi: GridFunction,
    norm: FinslerNorm,
    x0: Vec<f64>,
    scale: f64,
}

impl Field for MoserField {
    fn radial(&self, r: f64) -> (f64, f64) {
        if r <= self.eps {
            return (self.scale * self.core, 0.0);
        }
        let span = (self.delta / self.eps).ln();
        let outer = self.t * self.phi_delta;
        let v = (self.core * (self.delta / r).ln() + outer * (r / self.eps).ln()) / span;
        (self.scale * v, self.scale * (outer - self.core) / (r * span))
    }

    fn outer(&self, p: &Probe, grad: &mut [f64]) -> f64 {
        let n = p.x.len();
        let d: Vec<f64> = p.x.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
        let r = self.norm.polar_eval(&d);
        let mut dr = vec![0.0; n];
        self.norm.polar_grad_into(&d, &mut dr);
        let (theta, dtheta) = smoothstep((r - self.delta) / self.delta);
        let phi = p.p1(&self.phi, grad);
        let diff = phi - self.phi_delta;
        for k in 0..n {
            grad[k] = self.scale * self.t * (theta * grad[k] + diff * dtheta / self.delta * dr[k]);
        }
        self.scale * self.t * (self.phi_delta + theta * diff)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MoserSequence {
    pub epsilon: f64,
    pub t_eps: f64,
    /// `1/(tⁿ log(1/ε))`.
    pub delta: f64,
    pub x_delta: Vec<f64>,
    /// Eigenfunction with unit energy at `x_δ` and at the concentration point.
    pub phi_x_delta: f64,
    pub phi_x0: f64,
    /// Core value `((n/λ_n) log(1/ε))^{(n−1)/n}` before normalisation.
    pub core_value: f64,
    /// `∫Fⁿ(∇φ_ε)` before normalisation.
    pub energy_raw: f64,
    /// Energy of the log annulus `ε < F° ≤ δ` by quadrature.
    pub middle_energy: f64,
    /// Same annulus in closed form.
    pub middle_closed_form: f64,
    /// Leading-order expansion `1 − n^{(n+1)/n} κ^{1/n} (log 1/ε)^{−(n−1)/n} t φ(x_δ)`.
    pub middle_expansion: f64,
    /// `‖F(∇v_ε)‖_{L^n}` after normalisation.
    pub gradient_norm: f64,
    /// `‖v_ε‖ⁿ_{L^n}`.
    pub ln_norm: f64,
    /// Core value after normalisation.
    pub m: f64,
    #[serde(skip)]
    pub v: GridFunction,
    #[serde(skip)]
    ctx: Arc<(Hybrid, MoserField)>,
}

impl std::fmt::Debug for MoserField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MoserField")
    }
}

impl MoserSequence {
    /// `J` of the normalised field, by hybrid quadrature.
    pub fn evaluate_j(&self, cfg: &MtConfig) -> Result<JValue> {
        cfg.validate()?;
        let (hy, field) = &*self.ctx;
        let n = hy.dim() as f64;
        let q = n / (n - 1.0);
        let coef = cfg.lambda * (1.0 + cfg.alpha * self.ln_norm).powf(1.0 / (n - 1.0));
        let value = hy.integrate(field, |v, _| (coef * v.abs().powf(q)).min(EXPONENT_CAP).exp());
        let saturated_cells = hy.count(field, |v| coef * v.abs().powf(q) > EXPONENT_CAP);
        Ok(JValue { value, saturated_cells })
    }
}

pub fn build_moser_sequence(
    params: &MoserParams,
    grid: &Arc<Grid>,
    domain: &Domain,
    norm: &FinslerNorm,
    eigen: &EigenPair,
) -> Result<MoserSequence> {
    let dim = norm.dim();
    let n = dim as f64;
    if grid.dim() != dim || params.x0.len() != dim || !eigen.eigenfunction.grid.mesh.eq(&grid.mesh) {
        return Err(Error::InvalidInput("grid, norm, eigenfunction and x0 dimensions must agree".into()));
    }
    let eps = params.epsilon;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let (kappa, lambda_n) = (norm.kappa()?, norm.lambda_n()?);
    let log_inv = (1.0 / eps).ln();
    let t = params.t_eps.unwrap_or_else(|| default_t_eps(dim, eps));
    if !(t > 0.0) {
        return Err(Error::InvalidInput("t_eps must be positive".into()));
    }
    let delta = 1.0 / (t.powf(n) * log_inv);
    if eps >= delta {
        return Err(Error::InvalidInput(format!("epsilon {eps} is not below delta {delta}")));
    }
    let x0 = &params.x0;
    if domain.inscribed_wulff_radius(norm, x0, 512) < 2.0 * delta {
        return Err(Error::DomainTooSmall { radius: 2.0 * delta });
    }

    let phi = eigen.eigenfunction.map(|v| v.abs() / eigen.lambda1.powf(1.0 / n));
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    let unit = norm.polar_eval(&e1);
    let x_delta: Vec<f64> = x0.iter().zip(&e1).map(|(a, b)| a + delta * b / unit).collect();
    let phi_delta = phi.interpolate(&x_delta);
    let phi_x0 = phi.interpolate(x0);
    let core = (n / lambda_n * log_inv).powf((n - 1.0) / n);

    let mut field = MoserField {
        core,
        t,
        phi_delta,
        eps,
        delta,
        phi,
        norm: norm.clone(),
        x0: x0.clone(),
        scale: 1.0,
    };
    let breaks: Vec<f64> = (0..=16).map(|k| eps * (delta / eps).powf(k as f64 / 16.0)).collect();
    let hy = Hybrid::new(norm, domain, &grid.mesh, x0, delta, &breaks, default_sub(dim));
    let energy_raw = hy.integrate(&field, |_, g| g.powf(n));

    let middle_energy = n * kappa
        * quad::adaptive_with_breaks(|r| field.radial(r).1.abs().powf(n) * r.powf(n - 1.0), &breaks, 1e-300, 1e-12).0;
    let middle_closed_form = n * kappa * (core - t * phi_delta).abs().powf(n) / (delta / eps).ln().powf(n - 1.0);
    let middle_expansion =
        1.0 - n.powf((n + 1.0) / n) * kappa.powf(1.0 / n) * log_inv.powf(-(n - 1.0) / n) * t * phi_delta;

    field.scale = energy_raw.powf(-1.0 / n);
    let gradient_norm = hy.integrate(&field, |_, g| g.powf(n)).powf(1.0 / n);
    let ln_norm = hy.integrate(&field, |v, _| v.abs().powf(n));
    let v = hy.sample(&field, grid)?;
    Ok(MoserSequence {
        epsilon: eps,
        t_eps: t,
        delta,
        x_delta,
        phi_x_delta: phi_delta,
        phi_x0,
        core_value: core,
        energy_raw,
        middle_energy,
        middle_closed_form,
        middle_expansion,
        gradient_norm,
        ln_norm,
        m: core * field.scale,
        v,
        ctx: Arc::new((hy, field)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceRow {
    pub epsilon: f64,
    pub t_eps: f64,
    pub delta: f64,
    /// `(log 1/ε)^{1/n} t_ε`.
    pub growth_variable: f64,
    pub j: f64,
    pub energy_raw: f64,
    pub m: f64,
    pub saturated_cells: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceTable {
    pub alpha: f64,
    pub lambda: f64,
    pub rows: Vec<DivergenceRow>,
    /// Least-squares fit `log J ≈ intercept + slope · growth_variable`.
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of `log J` with the growth variable.
    pub correlation: f64,
    /// Asymptotic slope `(n^{(2n+1)/n}/(n−1)) κ^{1/n} φ(x₀)`.
    pub predicted_slope: f64,
    /// `J` at the last rung over `J` at the first.
    pub ratio: f64,
    pub strictly_increasing: bool,
}

impl DivergenceTable {
    pub fn family_rows(&self) -> Vec<FamilyRow> {
        self.rows
            .iter()
            .map(|r| FamilyRow {
                epsilon: r.epsilon,
                j: r.j,
                energy: r.energy_raw,
                m: r.m,
                interface_jump: 0.0,
                saturated_cells: r.saturated_cells,
            })
            .collect()
    }
}

/// `J_{λ_n}^α` of the normalised Moser family along the `ε` ladder.
pub fn divergence_demo(
    grid: &Arc<Grid>,
    domain: &Domain,
    norm: &FinslerNorm,
    eigen: &EigenPair,
    alpha: f64,
    epsilons: &[f64],
    x0: &[f64],
) -> Result<DivergenceTable> {
    let n = norm.dim();
    divergence_demo_with(grid, domain, norm, eigen, alpha, epsilons, x0, |eps| default_t_eps(n, eps))
}

/// [`divergence_demo`] with `t_ε` taken from `t_eps(ε)`.
#[allow(clippy::too_many_arguments)]
pub fn divergence_demo_with<T: Fn(f64) -> f64 + Sync>(
    grid: &Arc<Grid>,
    domain: &Domain,
    norm: &FinslerNorm,
    eigen: &EigenPair,
    alpha: f64,
    epsilons: &[f64],
    x0: &[f64],
    t_eps: T,
) -> Result<DivergenceTable> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidInput("the epsilon ladder needs at least two rungs".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("the epsilon ladder must be strictly decreasing".into()));
    }
    let cfg = MtConfig::critical(norm, alpha)?;
    let n = norm.dim() as f64;
    let rows: Vec<Result<(DivergenceRow, f64)>> = epsilons
        .par_iter()
        .map(|&eps| {
            let params = MoserParams { epsilon: eps, t_eps: Some(t_eps(eps)), x0: x0.to_vec() };
            let seq = build_moser_sequence(&params, grid, domain, norm, eigen)?;
            let j = seq.evaluate_j(&cfg)?;
            Ok((
                DivergenceRow {
                    epsilon: eps,
                    t_eps: seq.t_eps,
                    delta: seq.delta,
                    growth_variable: (1.0 / eps).ln().powf(1.0 / n) * seq.t_eps,
                    j: j.value,
                    energy_raw: seq.energy_raw,
                    m: seq.m,
                    saturated_cells: j.saturated_cells,
                    gradient_norm: seq.gradient_norm,
                },
                seq.phi_x0,
            ))
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    let mut phi0 = 0.0;
    for r in rows {
        let (row, p) = r?;
        phi0 = p;
        out.push(row);
    }
    let xs: Vec<f64> = out.iter().map(|r| r.growth_variable).collect();
    let ys: Vec<f64> = out.iter().map(|r| r.j.ln()).collect();
    let (slope, intercept, correlation) = linear_fit(&xs, &ys);
    let kappa = norm.kappa()?;
    Ok(DivergenceTable {
        alpha,
        lambda: cfg.lambda,
        slope,
        intercept,
        correlation,
        predicted_slope: n.powf((2.0 * n + 1.0) / n) / (n - 1.0) * kappa.powf(1.0 / n) * phi0,
        ratio: out[out.len() - 1].j / out[0].j,
        strictly_increasing: out.windows(2).all(|w| w[1].j > w[0].j),
        rows: out,
    })
}

/// Slope, intercept and Pearson correlation.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy / (sxx * syy).sqrt())
}
