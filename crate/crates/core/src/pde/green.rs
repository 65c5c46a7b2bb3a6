//! Green function with `L^n` perturbation and extraction of its constant.

use std::sync::Arc;

use serde::Serialize;

use super::solver::minimize;
use super::{check_pde_norm, EnergyOperator, SolverOptions};
use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct GreenOptions {
    pub alpha: f64,
    pub x0: Vec<f64>,
    pub solver: SolverOptions,
    pub max_fixed_point: usize,
    /// Fixed point stops when `max|G_{k+1} − G_k| < fixed_point_tol · max|G|`.
    pub fixed_point_tol: f64,
}

impl GreenOptions {
    pub fn new(alpha: f64, x0: &[f64]) -> Self {
        Self {
            alpha,
            x0: x0.to_vec(),
            solver: SolverOptions::default(),
            max_fixed_point: 500,
            fixed_point_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreenFit {
    pub green: GridFunction,
    pub x0: Vec<f64>,
    /// `(nκ_n)^{−1/(n−1)}`, the coefficient of `−log F°`.
    pub log_coefficient: f64,
    pub c_g: f64,
    /// Least-squares slope of `G` against `−c log F°(x − x₀)` on the annulus.
    pub slope: f64,
    /// RMS of `G + c log F° − C_G` on the annulus.
    pub fit_residual: f64,
    /// Mean remainder `G + c log F° − C_G` on the inner ring `4h ≤ F° ≤ 5h`.
    pub psi_inner: f64,
    pub annulus_nodes: usize,
    pub fixed_point_iterations: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreenSummary {
    pub c_g: f64,
    pub slope: f64,
    pub fit_residual: f64,
    pub psi_inner: f64,
    pub log_coefficient: f64,
    pub annulus_nodes: usize,
    pub fixed_point_iterations: usize,
}

impl GreenFit {
    pub fn summary(&self) -> GreenSummary {
        GreenSummary {
            c_g: self.c_g,
            slope: self.slope,
            fit_residual: self.fit_residual,
            psi_inner: self.psi_inner,
            log_coefficient: self.log_coefficient,
            annulus_nodes: self.annulus_nodes,
            fixed_point_iterations: self.fixed_point_iterations,
        }
    }
}

pub fn green_function(grid: &Arc<Grid>, norm: &FinslerNorm, alpha: f64, x0: &[f64]) -> Result<GreenFit> {
    green_function_with(grid, norm, &GreenOptions::new(alpha, x0))
}

pub fn green_function_with(grid: &Arc<Grid>, norm: &FinslerNorm, opts: &GreenOptions) -> Result<GreenFit> {
    check_pde_norm(norm)?;
    let mesh = &grid.mesh;
    let h = mesh.h;
    let n = norm.dim() as f64;
    let x0 = &opts.x0;
    if x0.len() != norm.dim() {
        return Err(Error::InvalidInput("x0 has the wrong dimension".into()));
    }
    if opts.alpha < 0.0 {
        return Err(Error::InvalidInput("alpha must be nonnegative".into()));
    }
    let rel: Vec<f64> = (0..mesh.len())
        .map(|i| {
            let x = mesh.coords(i);
            let d: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
            norm.polar_eval(&d)
        })
        .collect();
    // hat of F°-radius 2h with unit discrete mass
    let mut delta: Vec<f64> = rel
        .iter()
        .zip(&grid.mask)
        .map(|(r, m)| if *m { (1.0 - r / (2.0 * h)).max(0.0) } else { 0.0 })
        .collect();
    let mass: f64 = delta.iter().sum::<f64>() * mesh.cell_measure();
    if mass == 0.0 {
        return Err(Error::InvalidInput("x0 is not inside the domain".into()));
    }
    delta.iter_mut().for_each(|v| *v /= mass);

    let op = EnergyOperator::new(grid, norm, opts.solver.regularization)?;
    let (mut g, _) = minimize(&op, &delta, None, &opts.solver, None)?;
    let mut iterations = 1;
    if opts.alpha > 0.0 {
        let mut converged = false;
        for _ in 0..opts.max_fixed_point {
            let f: Vec<f64> =
                delta.iter().zip(&g).map(|(d, v)| d + opts.alpha * v.abs().powf(n - 2.0) * v).collect();
            let (next, _) = minimize(&op, &f, Some(&g), &opts.solver, None)?;
            iterations += 1;
            let scale = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let change = next.iter().zip(&g).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            g = next;
            if !scale.is_finite() || scale > 1e12 {
                break;
            }
            if change < opts.fixed_point_tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "Green fixed point",
                iterations,
                residual: f64::NAN,
            });
        }
    }
    let green = GridFunction::from_values(grid, g)?;

    let c = (n * norm.kappa()?).powf(-1.0 / (n - 1.0));
    let ring: Vec<(f64, f64)> = grid
        .active()
        .iter()
        .filter(|&&i| rel[i] >= 4.0 * h && rel[i] <= 8.0 * h)
        .map(|&i| (-c * rel[i].ln(), green.values[i]))
        .collect();
    if ring.len() < 3 {
        return Err(Error::InvalidInput("fitting annulus holds fewer than three nodes".into()));
    }
    let m = ring.len() as f64;
    let c_g = ring.iter().map(|(l, g)| g - l).sum::<f64>() / m;
    let fit_residual = (ring.iter().map(|(l, g)| (g - l - c_g).powi(2)).sum::<f64>() / m).sqrt();
    let (ml, mg) = (ring.iter().map(|p| p.0).sum::<f64>() / m, ring.iter().map(|p| p.1).sum::<f64>() / m);
    let sxy: f64 = ring.iter().map(|(l, g)| (l - ml) * (g - mg)).sum();
    let sxx: f64 = ring.iter().map(|(l, _)| (l - ml).powi(2)).sum();
    let slope = sxy / sxx;
    let inner: Vec<f64> = grid
        .active()
        .iter()
        .filter(|&&i| rel[i] >= 4.0 * h && rel[i] <= 5.0 * h)
        .map(|&i| green.values[i] + c * rel[i].ln() - c_g)
        .collect();
    let psi_inner = inner.iter().sum::<f64>() / inner.len().max(1) as f64;
    if fit_residual > 0.2 * c_g.abs().max(c) {
        return Err(Error::FitUnstable { residual: fit_residual, constant: c_g });
    }
    Ok(GreenFit {
        green,
        x0: x0.clone(),
        log_coefficient: c,
        c_g,
        slope,
        fit_residual,
        psi_inner,
        annulus_nodes: ring.len(),
        fixed_point_iterations: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;

    #[test]
    fn disk_green_constant_coarse() {
        let e = FinslerNorm::euclidean(2).unwrap();
        let g = Grid::new(&Domain::disk(1.0), 1.0 / 64.0).unwrap();
        let fit = green_function(&g, &e, 0.0, &[0.0, 0.0]).unwrap();
        assert!(fit.c_g.abs() < 0.02, "{fit:?}");
        assert!((fit.slope - 1.0).abs() < 0.05);
        assert!((fit.log_coefficient - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-10);
    }
}
