//! Truncated bubble glued to the Green function, and the upper bound it tests.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::hybrid::{smoothstep, Field, Hybrid, Probe};
use super::identities::harmonic_number;
use super::{default_sub, FamilyRow};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction};
use crate::mt::{JValue, MtConfig, EXPONENT_CAP};
use crate::pde::{bubble_profile, GreenFit};

/// Constants shared by the Green representation and the bubble.
#[derive(Debug, Clone)]
struct Shape {
    n: f64,
    kappa: f64,
    lambda: f64,
    /// Coefficient of `−log F°`.
    c_log: f64,
    c_g: f64,
    x0: Vec<f64>,
    norm: FinslerNorm,
    /// Nodal `G − L` on the whole lattice, `L = −c log F° + C_G`.
    psi: GridFunction,
    /// Blend `χ` rises from 0 at `blend` to 1 at `2·blend`.
    blend: f64,
}

impl Shape {
    fn log_part(&self, r: f64) -> f64 {
        -self.c_log * r.ln() + self.c_g
    }

    /// Bubble at scale `ε` and its derivative in `r`.
    fn bubble(&self, eps: f64, r: f64) -> (f64, f64) {
        let (n, kappa) = (self.n, self.kappa);
        let s = r / eps;
        let a = kappa.powf(1.0 / (n - 1.0));
        let d = -((n - 1.0) / self.lambda) * a * n / (n - 1.0) * s.powf(1.0 / (n - 1.0))
            / (1.0 + a * s.powf(n / (n - 1.0)));
        (bubble_profile(n, kappa, self.lambda, s), d / eps)
    }

    /// `L(r)` and the interpolated remainder `ψ_h`; writes `∇ψ_h`.
    fn green_outer(&self, p: &Probe, r: f64, grad: &mut [f64]) -> (f64, f64) {
        let psi = p.p1(&self.psi, grad);
        (self.log_part(r), psi)
    }
}

fn polar_and_grad(shape: &Shape, x: &[f64]) -> (f64, Vec<f64>) {
    let d: Vec<f64> = x.iter().zip(&shape.x0).map(|(a, b)| a - b).collect();
    let mut dr = vec![0.0; d.len()];
    shape.norm.polar_grad_into(&d, &mut dr);
    (shape.norm.polar_eval(&d), dr)
}

/// `G_α` represented as `L + χψ_h`.
struct GreenField<'a>(&'a Shape);

impl Field for GreenField<'_> {
    fn radial(&self, r: f64) -> (f64, f64) {
        (self.0.log_part(r), -self.0.c_log / r)
    }

    fn outer(&self, p: &Probe, grad: &mut [f64]) -> f64 {
        let s = self.0;
        let (r, dr) = polar_and_grad(s, p.x);
        let (l, psi) = s.green_outer(p, r, grad);
        let (chi, dchi) = smoothstep((r - s.blend) / s.blend);
        for k in 0..grad.len() {
            grad[k] = -s.c_log / r * dr[k] + chi * grad[k] + psi * dchi / s.blend * dr[k];
        }
        l + chi * psi
    }
}

/// `(C + C^{−1/(n−1)}(w(x/ε) + b)) / D` on `F° ≤ Rε`, `C^{−1/(n−1)}(G − ηψ)/D` outside.
#[derive(Clone)]
struct GluedField {
    shape: Arc<Shape>,
    eps: f64,
    r_eps: f64,
    c: f64,
    b: f64,
    d: f64,
}

impl GluedField {
    fn amp(&self) -> f64 {
        self.c.powf(-1.0 / (self.shape.n - 1.0)) / self.d
    }

    fn core(&self, r: f64) -> (f64, f64) {
        let (w, dw) = self.shape.bubble(self.eps, r);
        (self.c / self.d + self.amp() * (w + self.b), self.amp() * dw)
    }
}

impl Field for GluedField {
    fn radial(&self, r: f64) -> (f64, f64) {
        if r <= self.r_eps {
            self.core(r)
        } else {
            (self.amp() * self.shape.log_part(r), -self.amp() * self.shape.c_log / r)
        }
    }

    fn outer(&self, p: &Probe, grad: &mut [f64]) -> f64 {
        let s = &*self.shape;
        let (r, dr) = polar_and_grad(s, p.x);
        let (l, psi) = s.green_outer(p, r, grad);
        let (chi, dchi) = smoothstep((r - s.blend) / s.blend);
        let (eta, deta) = {
            let (v, dv) = smoothstep((r - self.r_eps) / self.r_eps);
            (1.0 - v, -dv / self.r_eps)
        };
        let w = (1.0 - eta) * chi;
        let amp = self.amp();
        for k in 0..grad.len() {
            let dw = (1.0 - eta) * dchi / s.blend * dr[k] - chi * deta * dr[k];
            grad[k] = amp * (-s.c_log / r * dr[k] + w * grad[k] + psi * dw);
        }
        amp * (l + w * psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GluedParams {
    pub epsilon: f64,
    pub alpha: f64,
}

#[derive(Clone, Serialize)]
pub struct GluedBubble {
    pub epsilon: f64,
    /// `R = −log ε`.
    pub r_big: f64,
    pub x0: Vec<f64>,
    pub c_g: f64,
    /// `1 + ½ + … + 1/(n−1)`.
    pub harmonic: f64,
    /// `‖G‖ⁿ_{L^n}`.
    pub green_ln_norm: f64,
    /// Energy of the unscaled profile: core bubble plus `G − ηψ` outside.
    pub profile_energy: f64,
    /// `C` from the asymptotic energy balance.
    pub c_analytic: f64,
    /// `C` from exact continuity at `F° = Rε` with the asymptotic `b`.
    pub c_continuity: f64,
    /// `((n−1)/λ_n) H_{n−1}`.
    pub b_analytic: f64,
    /// Constants that make the unswept energy exactly one.
    pub c: f64,
    pub b: f64,
    /// Energy with the asymptotic constants.
    pub pre_energy: f64,
    /// Inner minus outer value at `F° = Rε` with the asymptotic constants.
    pub interface_jump: f64,
    pub core_amplitude: f64,
    pub relative_jump: f64,
    /// `∫Fⁿ(∇φ_ε)` after the normalisation sweep.
    pub energy: f64,
    /// `‖φ_ε‖ⁿ_{L^n}`.
    pub ln_norm: f64,
    #[serde(skip)]
    pub field: GridFunction,
    #[serde(skip)]
    ctx: Arc<(Hybrid, GluedField)>,
}

impl std::fmt::Debug for GluedBubble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GluedBubble")
            .field("epsilon", &self.epsilon)
            .field("c", &self.c)
            .field("b", &self.b)
            .field("b_analytic", &self.b_analytic)
            .field("pre_energy", &self.pre_energy)
            .field("relative_jump", &self.relative_jump)
            .field("energy", &self.energy)
            .finish_non_exhaustive()
    }
}

impl GluedBubble {
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

fn radial_breaks(lo: f64, hi: f64, pieces: usize) -> Vec<f64> {
    (0..=pieces).map(|k| lo * (hi / lo).powf(k as f64 / pieces as f64)).collect()
}

pub fn build_glued_bubble(
    params: &GluedParams,
    grid: &Arc<Grid>,
    domain: &Domain,
    norm: &FinslerNorm,
    green: &GreenFit,
) -> Result<GluedBubble> {
    let dim = norm.dim();
    let n = dim as f64;
    let eps = params.epsilon;
    if !(eps > 0.0 && eps < 1.0 / std::f64::consts::E) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1/e), got {eps}")));
    }
    if !(params.alpha >= 0.0) {
        return Err(Error::InvalidInput("alpha must be nonnegative".into()));
    }
    if !green.green.grid.mesh.eq(&grid.mesh) {
        return Err(Error::MeshMismatch);
    }
    let x0 = green.x0.clone();
    let r_big = -eps.ln();
    let r_eps = r_big * eps;
    if domain.inscribed_wulff_radius(norm, &x0, 512) < 2.0 * r_eps {
        return Err(Error::DomainTooSmall { radius: 2.0 * r_eps });
    }
    let (kappa, lambda) = (norm.kappa()?, norm.lambda_n()?);
    let h = grid.h();
    let c_log = green.log_coefficient;
    let c_g = green.c_g;
    let mesh = &grid.mesh;
    let psi_values: Vec<f64> = (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            let x = mesh.coords(i);
            let d: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
            let r = norm.polar_eval(&d);
            if r > 0.0 {
                green.green.values[i] + c_log * r.ln() - c_g
            } else {
                0.0
            }
        })
        .collect();
    let shape = Arc::new(Shape {
        n,
        kappa,
        lambda,
        c_log,
        c_g,
        x0: x0.clone(),
        norm: norm.clone(),
        psi: GridFunction { grid: grid.clone(), values: psi_values },
        blend: 4.0 * h,
    });
    let sub = default_sub(dim);

    let green_hy = Hybrid::new(norm, domain, mesh, &x0, 4.0 * h, &radial_breaks(4.0 * h * 1e-12, 4.0 * h, 24), sub);
    let green_ln_norm = green_hy.integrate(&GreenField(&shape), |v, _| v.abs().powf(n));
    let alpha_g = params.alpha * green_ln_norm;

    let rho = r_eps.max(4.0 * h);
    let mut breaks = radial_breaks(eps * 1e-4, r_eps, 32);
    breaks.push(rho);
    let hy = Hybrid::new(norm, domain, mesh, &x0, rho, &breaks, sub);
    let mut field = GluedField { shape: shape.clone(), eps, r_eps, c: 1.0, b: 0.0, d: 1.0 };
    let profile_energy = hy.integrate(&field, |_, g| g.powf(n));

    let q = n / (n - 1.0);
    let harmonic = harmonic_number(dim - 1);
    let b_analytic = (n - 1.0) / lambda * harmonic;
    let l_r = shape.log_part(r_eps);
    let w_r = bubble_profile(n, kappa, lambda, r_big);
    let s_analytic = -c_log * eps.ln() + kappa.ln() / lambda + c_g - b_analytic;
    let s_continuity = l_r - w_r - b_analytic;
    if !(s_analytic > 0.0 && s_continuity > 0.0) {
        return Err(Error::InvalidInput("epsilon too large for a positive normalisation constant".into()));
    }
    let c_analytic = s_analytic.powf(1.0 / q);
    let c_continuity = s_continuity.powf(1.0 / q);
    if (c_continuity - c_analytic).abs() > 0.05 * c_analytic {
        return Err(Error::ConstantsMismatch { continuity: c_continuity, energy: c_analytic });
    }

    // with s = C^{n/(n−1)} the energy is profile_energy / (s + α‖G‖ⁿ)
    let pre_energy = profile_energy / (s_analytic + alpha_g);
    let pre = GluedField {
        c: c_analytic,
        b: b_analytic,
        d: (1.0 + alpha_g / s_analytic).powf(1.0 / n),
        ..field.clone()
    };
    let inner = pre.core(r_eps).0;
    let outer = pre.amp() * l_r;
    let core_amplitude = pre.core(0.0).0;
    let interface_jump = inner - outer;

    let s = profile_energy - alpha_g;
    if !(s > 0.0) {
        return Err(Error::InvalidInput("alpha too large for this Green function".into()));
    }
    field.c = s.powf(1.0 / q);
    field.b = l_r - w_r - s;
    field.d = (1.0 + alpha_g / s).powf(1.0 / n);
    let swept = hy.integrate(&field, |_, g| g.powf(n));
    field.d *= swept.powf(1.0 / n);
    let energy = hy.integrate(&field, |_, g| g.powf(n));
    let ln_norm = hy.integrate(&field, |v, _| v.abs().powf(n));
    let sampled = hy.sample(&field, grid)?;
    Ok(GluedBubble {
        epsilon: eps,
        r_big,
        x0,
        c_g,
        harmonic,
        green_ln_norm,
        profile_energy,
        c_analytic,
        c_continuity,
        b_analytic,
        c: field.c,
        b: field.b,
        pre_energy,
        interface_jump,
        core_amplitude,
        relative_jump: interface_jump.abs() / core_amplitude.abs(),
        energy,
        ln_norm,
        field: sampled,
        ctx: Arc::new((hy, field)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub epsilon: f64,
    pub j: f64,
    pub saturated_cells: usize,
    pub pre_energy: f64,
    pub energy: f64,
    pub core_amplitude: f64,
    pub relative_jump: f64,
    pub c: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub alpha: f64,
    pub c_g: f64,
    pub harmonic: f64,
    /// `|Ω|`.
    pub area: f64,
    /// `|Ω| + κ_n e^{λ_n C_G + H_{n−1}}`.
    pub bound: f64,
    pub rows: Vec<SandwichRow>,
    pub max_j: f64,
    pub exceeds: bool,
    /// `max J / bound`.
    pub ratio: f64,
}

impl SandwichReport {
    pub fn family_rows(&self) -> Vec<FamilyRow> {
        self.rows
            .iter()
            .map(|r| FamilyRow {
                epsilon: r.epsilon,
                j: r.j,
                energy: r.pre_energy,
                m: r.core_amplitude,
                interface_jump: r.relative_jump,
                saturated_cells: r.saturated_cells,
            })
            .collect()
    }
}

/// `|Ω| + κ_n e^{λ_n C_G + H_{n−1}}`.
pub fn upper_bound(norm: &FinslerNorm, domain: &Domain, c_g: f64) -> Result<f64> {
    Ok(domain.measure()? + norm.kappa()? * (norm.lambda_n()? * c_g + harmonic_number(norm.dim() - 1)).exp())
}

/// Evaluates `J_{λ_n}^α` on the glued bubble along the `ε` ladder and compares with the bound.
pub fn bound_sandwich(
    grid: &Arc<Grid>,
    domain: &Domain,
    norm: &FinslerNorm,
    alpha: f64,
    epsilons: &[f64],
    green: &GreenFit,
) -> Result<SandwichReport> {
    if epsilons.is_empty() {
        return Err(Error::InvalidInput("empty epsilon ladder".into()));
    }
    let cfg = MtConfig::critical(norm, alpha)?;
    let rows: Vec<Result<SandwichRow>> = epsilons
        .par_iter()
        .map(|&epsilon| {
            let g = build_glued_bubble(&GluedParams { epsilon, alpha }, grid, domain, norm, green)?;
            let j = g.evaluate_j(&cfg)?;
            Ok(SandwichRow {
                epsilon,
                j: j.value,
                saturated_cells: j.saturated_cells,
                pre_energy: g.pre_energy,
                energy: g.energy,
                core_amplitude: g.core_amplitude,
                relative_jump: g.relative_jump,
                c: g.c,
                b: g.b,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let bound = upper_bound(norm, domain, green.c_g)?;
    let max_j = rows.iter().map(|r| r.j).fold(f64::NEG_INFINITY, f64::max);
    Ok(SandwichReport {
        alpha,
        c_g: green.c_g,
        harmonic: harmonic_number(norm.dim() - 1),
        area: domain.measure()?,
        bound,
        max_j,
        exceeds: max_j > bound,
        ratio: max_j / bound,
        rows,
    })
}
