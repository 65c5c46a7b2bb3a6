//! The perturbed Moser–Trudinger functional
//! `J(u) = ∫ exp(λ (1 + α‖u‖ⁿ_{L^n})^{1/(n−1)} |u|^{n/(n−1)})` on the sphere
//! `‖F(∇u)‖_{L^n} = 1`, its subcritical maximisers and their concentration.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction};
use crate::pde::{
    bubble_profile, first_eigenpair, minimize, EigenPair, EnergyOperator, GreenFit, SolverOptions,
};

/// Per-cell exponents are clipped here; `e^700` is close to the largest finite double.
pub const EXPONENT_CAP: f64 = 700.0;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const FLAT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtConfig {
    /// Exponent coefficient `λ`.
    pub lambda: f64,
    /// Strength of the `L^n` perturbation.
    pub alpha: f64,
    /// Gap `λ_n − λ`.
    pub epsilon_sub: f64,
}

impl MtConfig {
    /// `λ = λ_n − ε_sub`.
    pub fn subcritical(norm: &FinslerNorm, epsilon_sub: f64, alpha: f64) -> Result<Self> {
        let cfg = Self { lambda: norm.lambda_n()? - epsilon_sub, alpha, epsilon_sub };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `λ = λ_n`.
    pub fn critical(norm: &FinslerNorm, alpha: f64) -> Result<Self> {
        Self::subcritical(norm, 0.0, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.epsilon_sub >= 0.0) {
            return Err(Error::InvalidInput("epsilon_sub must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JValue {
    pub value: f64,
    /// Cells whose exponent hit [`EXPONENT_CAP`].
    pub saturated_cells: usize,
}

impl JValue {
    pub fn saturated(&self) -> bool {
        self.saturated_cells > 0
    }
}

fn chunked_sum<F: Fn(usize) -> f64 + Sync>(idx: &[usize], f: F) -> f64 {
    let parts: Vec<f64> = idx.par_chunks(4096).map(|c| c.iter().map(|&i| f(i)).sum::<f64>()).collect();
    parts.iter().sum()
}

/// Quantities shared by `J`, its gradient and the Euler–Lagrange system.
struct Exponents {
    n: f64,
    /// `‖u‖ⁿ_{L^n}`.
    ln: f64,
    /// `λ (1 + α‖u‖ⁿ)^{1/(n−1)}`.
    coef: f64,
    exps: Vec<f64>,
    saturated: usize,
}

impl Exponents {
    fn new(u: &GridFunction, cfg: &MtConfig, n: f64) -> Self {
        let ln = u.lp_power(n);
        let coef = cfg.lambda * (1.0 + cfg.alpha * ln).powf(1.0 / (n - 1.0));
        let q = n / (n - 1.0);
        let exps: Vec<f64> = u.values.par_iter().map(|v| coef * v.abs().powf(q)).collect();
        let saturated = u.grid.active().iter().filter(|&&i| exps[i] > EXPONENT_CAP).count();
        Self { n, ln, coef, exps, saturated }
    }

    fn e(&self, i: usize) -> f64 {
        self.exps[i].min(EXPONENT_CAP).exp()
    }
}

pub fn evaluate_j(u: &GridFunction, cfg: &MtConfig, norm: &FinslerNorm) -> Result<JValue> {
    cfg.validate()?;
    if u.grid.dim() != norm.dim() {
        return Err(Error::InvalidInput("grid and norm dimensions differ".into()));
    }
    let ex = Exponents::new(u, cfg, norm.dim() as f64);
    let value = chunked_sum(u.grid.active(), |i| ex.e(i)) * u.mesh().cell_measure();
    Ok(JValue { value, saturated_cells: ex.saturated })
}

/// Euler–Lagrange parameters of a constrained critical point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElParams {
    /// `λ (1 + α‖u‖ⁿ)^{1/(n−1)}`.
    pub alpha_eps: f64,
    /// `(1 + α‖u‖ⁿ) / (1 + 2α‖u‖ⁿ)`.
    pub beta_eps: f64,
    /// `α / (1 + 2α‖u‖ⁿ)`.
    pub gamma_eps: f64,
    /// `∫ u^{n/(n−1)} e^{α_ε u^{n/(n−1)}}`.
    pub lambda_eps: f64,
}

fn el_params(u: &GridFunction, cfg: &MtConfig, ex: &Exponents) -> ElParams {
    let q = ex.n / (ex.n - 1.0);
    let a = cfg.alpha * ex.ln;
    let lambda_eps = chunked_sum(u.grid.active(), |i| u.values[i].abs().powf(q) * ex.e(i)) * u.mesh().cell_measure();
    ElParams {
        alpha_eps: ex.coef,
        beta_eps: (1.0 + a) / (1.0 + 2.0 * a),
        gamma_eps: cfg.alpha / (1.0 + 2.0 * a),
        lambda_eps,
    }
}

/// Right side `β/λ_ε u^{1/(n−1)} e^{α_ε u^{n/(n−1)}} + γ u^{n−1}` at every node.
fn el_source(u: &GridFunction, ex: &Exponents, p: &ElParams) -> Vec<f64> {
    let n = ex.n;
    let scale = p.beta_eps / p.lambda_eps;
    u.values
        .par_iter()
        .zip(u.grid.mask.par_iter())
        .enumerate()
        .map(|(i, (v, m))| {
            if !m {
                return 0.0;
            }
            let s = v.signum();
            scale * s * v.abs().powf(1.0 / (n - 1.0)) * ex.e(i) + p.gamma_eps * s * v.abs().powf(n - 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtReport {
    pub j_value: f64,
    pub saturated_cells: usize,
    /// `|‖F(∇u)‖_{L^n} − 1|`.
    pub constraint_residual: f64,
    pub el_params: ElParams,
    pub m_eps: f64,
    pub x_eps: Vec<f64>,
    /// Blow-up radius `(λ_ε β_ε⁻¹ M^{−n/(n−1)} e^{−α_ε M^{n/(n−1)}})^{1/n}`.
    pub r_eps: f64,
    /// `max |−Q_n u − source|` over the mask.
    pub el_residual: f64,
    /// Largest source value.
    pub source_max: f64,
    /// `el_residual / source_max`.
    pub el_residual_norm: f64,
}

pub fn el_verify(u: &GridFunction, cfg: &MtConfig, norm: &FinslerNorm) -> Result<MtReport> {
    let op = EnergyOperator::for_pde(&u.grid, norm)?;
    el_verify_with(&op, u, cfg)
}

fn el_verify_with(op: &EnergyOperator, u: &GridFunction, cfg: &MtConfig) -> Result<MtReport> {
    cfg.validate()?;
    let n = op.norm().dim() as f64;
    let ex = Exponents::new(u, cfg, n);
    let j_value = chunked_sum(u.grid.active(), |i| ex.e(i)) * u.mesh().cell_measure();
    let params = el_params(u, cfg, &ex);
    let src = el_source(u, &ex, &params);
    let lhs = op.apply(u)?;
    let mut el_residual = 0.0f64;
    let mut source_max = 0.0f64;
    for &i in u.grid.active() {
        el_residual = el_residual.max((lhs.values[i] - src[i]).abs());
        source_max = source_max.max(src[i].abs());
    }
    let energy = EnergyOperator::new(&u.grid, op.norm(), 0.0)?.dirichlet_integral(&u.values);
    let (imax, m_eps) = u.argmax();
    let q = n / (n - 1.0);
    let r_eps = (params.lambda_eps / params.beta_eps * m_eps.powf(-q) * (-params.alpha_eps * m_eps.powf(q)).exp())
        .powf(1.0 / n);
    Ok(MtReport {
        j_value,
        saturated_cells: ex.saturated,
        constraint_residual: (energy.powf(1.0 / n) - 1.0).abs(),
        el_params: params,
        m_eps,
        x_eps: u.mesh().coords(imax),
        r_eps,
        el_residual,
        source_max,
        el_residual_norm: if source_max > 0.0 { el_residual / source_max } else { el_residual },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtOptions {
    pub max_iter: usize,
    /// Stop once the relative Euler–Lagrange residual drops below this.
    pub tol: f64,
    /// When the line search stalls, accept the iterate if its residual is below this.
    pub stall_tol: f64,
    pub solver: SolverOptions,
    /// Relative amplitude of random perturbations added to each start.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for MtOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-8,
            stall_tol: 1e-5,
            solver: SolverOptions::default(),
            jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartProfile {
    Cone,
    Eigenfunction,
    TruncatedLog,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartRun {
    pub profile: StartProfile,
    pub iterations: usize,
    /// `J` at every accepted iterate, starting with the projected start.
    pub history: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Maximizer {
    pub u: GridFunction,
    pub report: MtReport,
    pub best: StartProfile,
    pub starts: Vec<StartRun>,
}

fn project(op0: &EnergyOperator, u: &mut GridFunction, n: f64) -> Result<()> {
    let d = op0.dirichlet_integral(&u.values);
    if !(d > 0.0) {
        return Err(Error::InvalidInput("start profile has zero energy".into()));
    }
    u.scale(d.powf(-1.0 / n));
    Ok(())
}

/// Node farthest from the boundary and the largest Wulff radius around it that stays on the mask.
fn wulff_core(grid: &Grid, norm: &FinslerNorm) -> (Vec<f64>, f64) {
    let dist = grid.distance_to_boundary();
    let mut c = 0;
    for &i in grid.active() {
        if dist[i] > dist[c] {
            c = i;
        }
    }
    let center = grid.mesh.coords(c);
    let radius = (0..grid.mesh.len())
        .into_par_iter()
        .filter(|&i| !grid.mask[i])
        .map(|i| {
            let x = grid.mesh.coords(i);
            let d: Vec<f64> = x.iter().zip(&center).map(|(a, b)| a - b).collect();
            norm.polar_eval(&d)
        })
        .reduce(|| f64::INFINITY, f64::min);
    (center, radius)
}

/// The three start profiles, before projection.
pub fn start_profiles(
    grid: &Arc<Grid>,
    norm: &FinslerNorm,
    eigen: &EigenPair,
) -> Vec<(StartProfile, GridFunction)> {
    let (c, r) = wulff_core(grid, norm);
    let rel = |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
        norm.polar_eval(&d)
    };
    let rho = (r / 16.0).max(2.0 * grid.h());
    vec![
        (StartProfile::Cone, GridFunction::from_fn(grid, |x| (r - rel(x)).max(0.0))),
        (StartProfile::Eigenfunction, eigen.eigenfunction.map(f64::abs)),
        (StartProfile::TruncatedLog, GridFunction::from_fn(grid, |x| (r / rel(x).max(rho)).ln().max(0.0))),
    ]
}

struct Ascent<'a> {
    op: &'a EnergyOperator,
    op0: &'a EnergyOperator,
    cfg: &'a MtConfig,
    opts: &'a MtOptions,
    n: f64,
}

impl Ascent<'_> {
    fn ascend(&self, mut u: GridFunction, run: &mut StartRun) -> Result<GridFunction> {
        let grid = u.grid.clone();
        let hn = grid.mesh.cell_measure();
        let n = self.n;
        let q = n / (n - 1.0);
        project(self.op0, &mut u, n)?;
        let mut dgrad = vec![0.0; u.values.len()];
        for iter in 0..=self.opts.max_iter {
            let ex = Exponents::new(&u, self.cfg, n);
            if ex.saturated > 0 {
                return Err(Error::Saturation { cells: ex.saturated });
            }
            let j = chunked_sum(grid.active(), |i| ex.e(i)) * hn;
            run.history.push(j);
            run.iterations = iter;
            let params = el_params(&u, self.cfg, &ex);
            let src = el_source(&u, &ex, &params);
            self.op.gradient(&u.values, &mut dgrad);
            let (mut res, mut smax) = (0.0f64, 0.0f64);
            for &i in grid.active() {
                res = res.max((dgrad[i] / hn - src[i]).abs());
                smax = smax.max(src[i].abs());
            }
            let rel = res / smax;
            if rel < self.opts.tol {
                return Ok(u);
            }
            if iter == self.opts.max_iter {
                break;
            }
            // Sobolev gradient: solve −Q_n v = source, which returns v = u at a critical point
            let solver = SolverOptions { tol: (1e-2 * rel).clamp(1e-12, 1e-6), ..self.opts.solver };
            let (v, _) = minimize(self.op, &src, Some(&u.values), &solver, None)?;
            let mut vhat = GridFunction::from_values(&grid, v)?;
            project(self.op0, &mut vhat, n)?;
            let d: Vec<f64> = vhat.values.iter().zip(&u.values).map(|(a, b)| a - b).collect();
            // derivative of J along the constraint, from ∂J/∂u = (n/(n−1)) α_ε λ_ε/β_ε · source · hⁿ
            let gfac = q * params.alpha_eps * params.lambda_eps / params.beta_eps * hn;
            let dot = |a: &[f64], b: &[f64]| chunked_sum(grid.active(), |i| a[i] * b[i]);
            let slope = gfac * (dot(&src, &d) - dot(&dgrad, &d) * dot(&src, &u.values));
            if !(slope > 0.0) {
                break;
            }
            let mut tau = 1.0;
            let mut accepted = None;
            while tau >= MIN_STEP {
                let mut cand = GridFunction::from_values(
                    &grid,
                    u.values.iter().zip(&d).map(|(a, b)| a + tau * b).collect(),
                )?;
                project(self.op0, &mut cand, n)?;
                let jc = evaluate_j(&cand, self.cfg, self.op.norm())?;
                if jc.saturated() {
                    return Err(Error::Saturation { cells: jc.saturated_cells });
                }
                if jc.value >= j + ARMIJO * tau * slope {
                    accepted = Some(cand);
                    break;
                }
                // J is flat to rounding near a critical point; take the full step if it is more stationary
                if tau == 1.0 && (jc.value - j).abs() <= FLAT * j && self.residual(&cand)? < rel {
                    accepted = Some(cand);
                    break;
                }
                tau *= 0.5;
            }
            match accepted {
                Some(next) => u = next,
                None => break,
            }
        }
        let last = self.residual(&u)?;
        if last < self.opts.stall_tol {
            Ok(u)
        } else {
            Err(Error::NonConvergence { what: "subcritical ascent", iterations: run.iterations, residual: last })
        }
    }

    fn residual(&self, u: &GridFunction) -> Result<f64> {
        Ok(el_verify_with(self.op, u, self.cfg)?.el_residual_norm)
    }
}

/// Projected Sobolev-gradient ascent from the three start profiles; returns the best.
pub fn maximize_subcritical(
    grid: &Arc<Grid>,
    norm: &FinslerNorm,
    cfg: &MtConfig,
    opts: &MtOptions,
    eigen: Option<&EigenPair>,
) -> Result<Maximizer> {
    cfg.validate()?;
    let op = EnergyOperator::new(grid, norm, opts.solver.regularization)?;
    let op0 = EnergyOperator::new(grid, norm, 0.0)?;
    let owned;
    let eigen = match eigen {
        Some(e) => e,
        None => {
            owned = first_eigenpair(grid, norm)?;
            &owned
        }
    };
    if cfg.alpha >= eigen.lambda1 {
        return Err(Error::InvalidInput(format!(
            "alpha {} is not below the first eigenvalue {}",
            cfg.alpha, eigen.lambda1
        )));
    }
    let mut starts = start_profiles(grid, norm, eigen);
    if opts.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for (_, s) in starts.iter_mut() {
            let amp = opts.jitter * s.max_abs();
            for (v, m) in s.values.iter_mut().zip(&grid.mask) {
                if *m {
                    *v += amp * rng.gen::<f64>();
                }
            }
        }
    }
    let ascent = Ascent { op: &op, op0: &op0, cfg, opts, n: norm.dim() as f64 };
    let results: Vec<(StartProfile, StartRun, Result<GridFunction>)> = starts
        .into_par_iter()
        .map(|(profile, s)| {
            let mut run = StartRun { profile, iterations: 0, history: Vec::new(), error: None };
            let out = ascent.ascend(s, &mut run);
            if let Err(e) = &out {
                run.error = Some(e.to_string());
            }
            (profile, run, out)
        })
        .collect();
    let mut best: Option<(StartProfile, GridFunction, f64)> = None;
    let mut first_err = None;
    let mut runs = Vec::new();
    for (profile, run, out) in results {
        match out {
            Ok(u) => {
                let j = *run.history.last().unwrap_or(&f64::NEG_INFINITY);
                if best.as_ref().is_none_or(|b| j > b.2) {
                    best = Some((profile, u, j));
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
        runs.push(run);
    }
    let Some((profile, u, _)) = best else {
        return Err(first_err.unwrap_or(Error::InvalidInput("no start profiles".into())));
    };
    let u = u.map(f64::abs);
    let report = el_verify_with(&op, &u, cfg)?;
    Ok(Maximizer { u, report, best: profile, starts: runs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationOptions {
    /// Compare with the bubble on `F°(x) ≤ radius` in rescaled variables.
    pub radius: f64,
    /// Nodes with `F°(y − x_ε)` below this are left out of the Green comparison.
    pub green_exclusion: f64,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        Self { radius: 2.0, green_exclusion: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Concentration {
    pub m_eps: f64,
    pub x_eps: Vec<f64>,
    pub r_eps: f64,
    /// `r_ε < 2h`: the bubble is not resolved by the mesh.
    pub mesh_too_coarse: bool,
    /// Rescaled profile `w_ε = M^{1/(n−1)}(u(x_ε + r_ε x) − M)` at `x = 0`.
    pub w_at_origin: f64,
    /// `max |w_ε − w|` over the sampled nodes.
    pub bubble_deviation: f64,
    pub bubble_samples: usize,
    /// `max |M^{1/(n−1)} u − G|` away from `x_ε`.
    pub green_deviation: Option<f64>,
}

pub fn concentration_diagnostics(
    u: &GridFunction,
    cfg: &MtConfig,
    norm: &FinslerNorm,
    green: Option<&GreenFit>,
    opts: &ConcentrationOptions,
) -> Result<Concentration> {
    let n = norm.dim() as f64;
    let report = el_verify(u, cfg, norm)?;
    let (m, x_eps, r_eps) = (report.m_eps, report.x_eps.clone(), report.r_eps);
    let (imax, _) = u.argmax();
    let grid = &u.grid;
    let (kappa, lambda) = (norm.kappa()?, norm.lambda_n()?);
    let amp = m.powf(1.0 / (n - 1.0));
    let rel = |i: usize| {
        let y = grid.mesh.coords(i);
        let d: Vec<f64> = y.iter().zip(&x_eps).map(|(a, b)| a - b).collect();
        norm.polar_eval(&d)
    };
    let mut deviation = 0.0f64;
    let mut samples = 0;
    for &i in grid.active() {
        let r = rel(i) / r_eps;
        if r <= opts.radius {
            let w = amp * (u.values[i] - m);
            deviation = deviation.max((w - bubble_profile(n, kappa, lambda, r)).abs());
            samples += 1;
        }
    }
    let green_deviation = match green {
        Some(g) => {
            if !u.same_grid(&g.green) {
                return Err(Error::MeshMismatch);
            }
            let mut worst = 0.0f64;
            for &i in grid.active() {
                if rel(i) >= opts.green_exclusion {
                    worst = worst.max((amp * u.values[i] - g.green.values[i]).abs());
                }
            }
            Some(worst)
        }
        None => None,
    };
    Ok(Concentration {
        m_eps: m,
        x_eps,
        r_eps,
        mesh_too_coarse: r_eps < 2.0 * grid.h(),
        w_at_origin: amp * (u.values[imax] - m),
        bubble_deviation: deviation,
        bubble_samples: samples,
        green_deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub epsilon_sub: f64,
    pub j: f64,
    pub m_eps: f64,
    pub r_eps: f64,
    pub el_residual: f64,
    pub report: MtReport,
}

/// Maximises along `ε_sub = f · λ_n` for each fraction `f`, in the order given.
pub fn subcritical_ladder(
    grid: &Arc<Grid>,
    norm: &FinslerNorm,
    fractions: &[f64],
    alpha: f64,
    opts: &MtOptions,
) -> Result<Vec<(LadderRow, GridFunction)>> {
    let lambda_n = norm.lambda_n()?;
    let eigen = first_eigenpair(grid, norm)?;
    let mut rows = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let cfg = MtConfig::subcritical(norm, f * lambda_n, alpha)?;
        let m = maximize_subcritical(grid, norm, &cfg, opts, Some(&eigen))?;
        let r = &m.report;
        rows.push((
            LadderRow {
                epsilon_sub: cfg.epsilon_sub,
                j: r.j_value,
                m_eps: r.m_eps,
                r_eps: r.r_eps,
                el_residual: r.el_residual_norm,
                report: r.clone(),
            },
            m.u,
        ));
    }
    Ok(rows)
}

pub fn write_ladder_csv<W: Write>(rows: &[LadderRow], mut w: W) -> Result<()> {
    writeln!(w, "epsilon_sub,J,M_eps,r_eps,el_residual")?;
    for r in rows {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.epsilon_sub, r.j, r.m_eps, r.r_eps, r.el_residual)?;
    }
    Ok(())
}
