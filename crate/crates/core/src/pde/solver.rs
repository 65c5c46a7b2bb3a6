//! Nonlinear conjugate gradient for `min Σ|T|F_εⁿ/n − Σ f u hⁿ`.

use std::io::Write;

use rayon::prelude::*;

use super::{check_pde_norm, EnergyOperator, DEFAULT_REGULARIZATION};
use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::GridFunction;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const RESTART_EVERY: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `max |∂E/∂u| / hⁿ < tol · (1 + |f|_∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub regularization: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 50_000, regularization: DEFAULT_REGULARIZATION }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final value of the minimised functional.
    pub energy: f64,
    /// Final scaled gradient norm.
    pub residual: f64,
}

/// Receives one row per solver iteration.
pub trait TelemetrySink {
    fn record(&mut self, iteration: usize, energy: f64, grad_norm: f64);
}

/// Writes `iteration,energy,grad_norm` rows.
pub struct CsvTelemetry<W: Write> {
    out: W,
    header: bool,
    pub error: Option<std::io::Error>,
}

impl<W: Write> CsvTelemetry<W> {
    pub fn new(out: W) -> Self {
        Self { out, header: false, error: None }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TelemetrySink for CsvTelemetry<W> {
    fn record(&mut self, iteration: usize, energy: f64, grad_norm: f64) {
        if self.error.is_some() {
            return;
        }
        let res = (|| {
            if !self.header {
                writeln!(self.out, "iteration,energy,grad_norm")?;
                self.header = true;
            }
            writeln!(self.out, "{iteration},{energy:.16e},{grad_norm:.16e}")
        })();
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}

/// Keeps rows in memory.
#[derive(Debug, Default, Clone)]
pub struct VecTelemetry {
    pub rows: Vec<(usize, f64, f64)>,
}

impl TelemetrySink for VecTelemetry {
    fn record(&mut self, iteration: usize, energy: f64, grad_norm: f64) {
        self.rows.push((iteration, energy, grad_norm));
    }
}

/// Solves `−Q_n u = f` with zero Dirichlet data.
pub fn dirichlet_solve(f: &GridFunction, norm: &FinslerNorm) -> Result<GridFunction> {
    Ok(dirichlet_solve_from(f, norm, None, &SolverOptions::default(), None)?.0)
}

pub fn dirichlet_solve_from(
    f: &GridFunction,
    norm: &FinslerNorm,
    initial: Option<&GridFunction>,
    opts: &SolverOptions,
    sink: Option<&mut dyn TelemetrySink>,
) -> Result<(GridFunction, SolveStats)> {
    check_pde_norm(norm)?;
    let op = EnergyOperator::new(&f.grid, norm, opts.regularization)?;
    if let Some(u0) = initial {
        if !u0.same_grid(f) {
            return Err(Error::MeshMismatch);
        }
    }
    let (values, stats) = minimize(&op, &f.values, initial.map(|u| u.values.as_slice()), opts, sink)?;
    Ok((GridFunction { grid: f.grid.clone(), values }, stats))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(8192)
        .zip(b.par_chunks(8192))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

struct Problem<'a> {
    op: &'a EnergyOperator,
    f_scaled: Vec<f64>,
    n: f64,
}

impl Problem<'_> {
    /// Functional value and gradient at `u`.
    fn eval(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.op.gradient(u, grad);
        grad.par_iter_mut().zip(self.f_scaled.par_iter()).for_each(|(g, f)| *g -= f);
        d / self.n - dot(&self.f_scaled, u)
    }
}

pub(crate) fn minimize(
    op: &EnergyOperator,
    f: &[f64],
    initial: Option<&[f64]>,
    opts: &SolverOptions,
    mut sink: Option<&mut dyn TelemetrySink>,
) -> Result<(Vec<f64>, SolveStats)> {
    let grid = op.grid().clone();
    let len = grid.mesh.len();
    let hn = grid.mesh.cell_measure();
    let mask = &grid.mask;
    let f_scaled: Vec<f64> = f.iter().zip(mask).map(|(v, m)| if *m { v * hn } else { 0.0 }).collect();
    let f_inf = f.iter().zip(mask).filter(|(_, m)| **m).fold(0.0f64, |a, (v, _)| a.max(v.abs()));
    let target = opts.tol * (1.0 + f_inf);
    let prob = Problem { op, f_scaled, n: grid.dim() as f64 };

    let mut u: Vec<f64> = match initial {
        Some(u0) => u0.iter().zip(mask).map(|(v, m)| if *m { *v } else { 0.0 }).collect(),
        None => vec![0.0; len],
    };
    let mut g = vec![0.0; len];
    let mut energy = prob.eval(&u, &mut g);
    let scaled_norm = |g: &[f64]| g.iter().fold(0.0f64, |a, v| a.max(v.abs())) / hn;
    let mut residual = scaled_norm(&g);
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut tau_prev = {
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let umax = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if dmax > 0.0 { 1e-3 * umax.max(1.0) / dmax } else { 1.0 }
    };
    let mut trial = vec![0.0; len];
    let mut g_trial = vec![0.0; len];
    let mut g_new = vec![0.0; len];

    if let Some(s) = sink.as_deref_mut() {
        s.record(0, energy, residual);
    }
    for iter in 0..opts.max_iter {
        if residual < target {
            return Ok((u, SolveStats { iterations: iter, energy, residual }));
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) || iter % RESTART_EVERY == RESTART_EVERY - 1 {
            d.iter_mut().zip(&g).for_each(|(d, g)| *d = -g);
            slope = dot(&g, &d);
        }
        // secant step from the directional derivative at a trial point
        let step_to = |tau: f64, out: &mut Vec<f64>| {
            out.par_iter_mut().zip(u.par_iter().zip(d.par_iter())).for_each(|(o, (a, b))| *o = a + tau * b);
        };
        step_to(tau_prev, &mut trial);
        let e_trial = prob.eval(&trial, &mut g_trial);
        let slope_trial = dot(&g_trial, &d);
        let mut tau = if slope_trial > slope {
            tau_prev * slope / (slope - slope_trial)
        } else {
            2.0 * tau_prev
        };
        if !(tau.is_finite() && tau > 0.0) {
            tau = tau_prev;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            step_to(tau, &mut trial);
            let e_new = prob.eval(&trial, &mut g_new);
            let slope_new = dot(&g_new, &d);
            let armijo = e_new <= energy + ARMIJO * tau * slope;
            // within rounding of the energy, fall back on the derivative test
            let flat = (e_new - energy).abs() <= 1e-12 * energy.abs().max(1e-300)
                && slope_new <= (1.0 - 2.0 * ARMIJO) * slope.abs();
            if armijo || flat || slope_new <= 0.0 && e_new <= energy {
                accepted = Some((tau, e_new));
                break;
            }
            if e_trial <= energy + ARMIJO * tau_prev * slope && tau > tau_prev {
                // the trial point itself is acceptable
                trial.par_iter_mut().zip(u.par_iter().zip(d.par_iter())).for_each(|(o, (a, b))| *o = a + tau_prev * b);
                g_new.copy_from_slice(&g_trial);
                accepted = Some((tau_prev, e_trial));
                break;
            }
            tau *= 0.5;
        }
        let Some((tau_ok, e_new)) = accepted else {
            return Err(Error::NonConvergence { what: "line search", iterations: iter, residual });
        };
        std::mem::swap(&mut u, &mut trial);
        let gg = dot(&g, &g);
        let beta = if gg > 0.0 {
            let num: f64 = dot(&g_new, &g_new) - dot(&g_new, &g);
            (num / gg).max(0.0)
        } else {
            0.0
        };
        std::mem::swap(&mut g, &mut g_new);
        d.par_iter_mut().zip(g.par_iter()).for_each(|(d, g)| *d = -g + beta * *d);
        energy = e_new;
        tau_prev = tau_ok;
        residual = scaled_norm(&g);
        if let Some(s) = sink.as_deref_mut() {
            s.record(iter + 1, energy, residual);
        }
    }
    if residual < target {
        return Ok((u, SolveStats { iterations: opts.max_iter, energy, residual }));
    }
    Err(Error::NonConvergence { what: "dirichlet solve", iterations: opts.max_iter, residual })
}
