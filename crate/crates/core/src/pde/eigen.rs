//! First eigenpair by inverse iteration.

use std::sync::Arc;

use super::solver::minimize;
use super::{check_pde_norm, dirichlet_energy, EnergyOperator, SolverOptions};
use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Positive on the mask, `‖φ‖_{L^n} = 1`.
    pub eigenfunction: GridFunction,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Stop when `|λ_{k+1} − λ_k| < tol · λ_k`.
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, solver: SolverOptions::default() }
    }
}

/// `‖F(∇u)‖ⁿ / ‖u‖ⁿ` in `L^n`.
pub fn rayleigh_quotient(u: &GridFunction, norm: &FinslerNorm) -> Result<f64> {
    let n = norm.dim() as f64;
    let den = u.lp_power(n);
    if den == 0.0 {
        return Err(Error::InvalidInput("Rayleigh quotient of the zero function".into()));
    }
    Ok(dirichlet_energy(u, norm)? / den)
}

pub fn first_eigenpair(grid: &Arc<Grid>, norm: &FinslerNorm) -> Result<EigenPair> {
    first_eigenpair_with(grid, norm, &EigenOptions::default())
}

pub fn first_eigenpair_with(grid: &Arc<Grid>, norm: &FinslerNorm, opts: &EigenOptions) -> Result<EigenPair> {
    check_pde_norm(norm)?;
    if grid.active().is_empty() {
        return Err(Error::InvalidInput("empty domain mask".into()));
    }
    let n = norm.dim() as f64;
    let op = EnergyOperator::new(grid, norm, opts.solver.regularization)?;
    let dist = grid.distance_to_boundary();
    let mut u = GridFunction::from_values(grid, dist)?;
    u.scale(1.0 / u.lp_norm(n));
    let mut lambda = dirichlet_energy(&u, norm)?;
    let mut rel_change = 1.0f64;
    let mut flips = 0;
    for iter in 1..=opts.max_iter {
        let f: Vec<f64> = u.values.iter().map(|v| lambda * v.abs().powf(n - 1.0)).collect();
        // loose inner solves while λ is still moving
        let solver = SolverOptions { tol: opts.solver.tol.max(1e-3 * rel_change), ..opts.solver };
        let (v, _) = minimize(&op, &f, Some(&u.values), &solver, None)?;
        let mut v = GridFunction::from_values(grid, v)?;
        let vmax = v.max_abs();
        if v.values.iter().any(|x| *x < -1e-10 * vmax) {
            flips += 1;
            if flips >= 3 {
                return Err(Error::SignFlip(flips));
            }
        } else {
            flips = 0;
        }
        v = v.map(f64::abs);
        v.scale(1.0 / v.lp_norm(n));
        let next = dirichlet_energy(&v, norm)?;
        rel_change = (next - lambda).abs() / lambda;
        lambda = next;
        u = v;
        if rel_change < opts.tol && solver.tol <= opts.solver.tol {
            return Ok(EigenPair { lambda1: lambda, eigenfunction: u, iterations: iter });
        }
    }
    Err(Error::NonConvergence { what: "inverse iteration", iterations: opts.max_iter, residual: rel_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use std::f64::consts::PI;

    #[test]
    fn square_eigenvalue_coarse() {
        let e = FinslerNorm::euclidean(2).unwrap();
        let g = Grid::new(&Domain::square(1.0), 1.0 / 32.0).unwrap();
        let pair = first_eigenpair(&g, &e).unwrap();
        // five-point Laplacian oracle: (4/h²)·2·sin²(πh/2)
        let h = 1.0 / 32.0;
        let exact = 8.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!((pair.lambda1 - exact).abs() < 1e-6 * exact, "{} vs {exact}", pair.lambda1);
        assert!((pair.eigenfunction.lp_norm(2.0) - 1.0).abs() < 1e-12);
        assert!(g.active().iter().all(|&i| pair.eigenfunction.values[i] > 0.0));
    }
}
