//! Variational discretisation of the n-Finsler-Laplacian.
//!
//! The discrete energy is `Σ_T |T| Fⁿ(∇u|_T)` over the Kuhn simplices of the
//! lattice, with `u` piecewise linear and zero off the mask. The operator
//! `−Q_n u` at a node is the derivative of one `n`-th of that energy with
//! respect to the nodal value, divided by the node measure `hⁿ`. Solvers
//! minimise convex energies built from it.

mod eigen;
mod green;
mod radial;
mod solver;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction, KuhnTable};

pub use eigen::{first_eigenpair, first_eigenpair_with, rayleigh_quotient, EigenOptions, EigenPair};
pub use green::{green_function, green_function_with, GreenFit, GreenOptions, GreenSummary};
pub use radial::{bubble, bubble_mass, bubble_partial_mass, bubble_profile, bubble_residual, BubbleMass, RadialFunction};
pub(crate) use solver::minimize;
pub use solver::{
    dirichlet_solve, dirichlet_solve_from, CsvTelemetry, SolveStats, SolverOptions, TelemetrySink, VecTelemetry,
};

/// Regularisation `F_ε = sqrt(F² + ε²|ξ|²)` used inside solvers.
pub const DEFAULT_REGULARIZATION: f64 = 1e-8;

/// Cells processed per parallel task; fixed so sums are reproducible.
const CHUNK: usize = 2048;

/// One summand of a node's gradient: simplex `perm` of the cell at corner
/// offset `corner`, picking flux component `plus` with `+` and `minus` with `−`.
#[derive(Debug, Clone, Copy)]
struct NodeTerm {
    corner: usize,
    perm: usize,
    plus: Option<usize>,
    minus: Option<usize>,
}

/// Discrete Dirichlet energy and its gradient on a fixed grid.
#[derive(Debug, Clone)]
pub struct EnergyOperator {
    norm: FinslerNorm,
    grid: Arc<Grid>,
    table: KuhnTable,
    /// Lower corners of cells that touch the mask.
    cells: Vec<usize>,
    /// Position in `cells` of each lower corner, `u32::MAX` if absent.
    cell_of: Vec<u32>,
    terms: Vec<NodeTerm>,
    reg: f64,
}

impl EnergyOperator {
    pub fn new(grid: &Arc<Grid>, norm: &FinslerNorm, reg: f64) -> Result<Self> {
        if grid.dim() != norm.dim() {
            return Err(Error::InvalidInput(format!(
                "norm dimension {} does not match grid dimension {}",
                norm.dim(),
                grid.dim()
            )));
        }
        let mesh = &grid.mesh;
        let table = KuhnTable::new(mesh);
        let mut cell_of = vec![u32::MAX; mesh.len()];
        let mut cells = Vec::new();
        for c in 0..mesh.len() {
            let ijk = mesh.unravel(c);
            if ijk.iter().zip(&mesh.shape).any(|(i, s)| i + 1 >= *s) {
                continue;
            }
            if table.corner_offsets.iter().any(|o| grid.mask[c + o]) {
                cell_of[c] = cells.len() as u32;
                cells.push(c);
            }
        }
        let dim = mesh.dim();
        let mut terms = Vec::new();
        for (corner, bits) in (0..1usize << dim).enumerate() {
            let k = bits.count_ones() as usize;
            for (pi, perm) in table.perms.iter().enumerate() {
                // the corner is the k-th path vertex iff its set bits are the first k axes of the path
                if perm[..k].iter().map(|a| 1usize << a).sum::<usize>() != bits {
                    continue;
                }
                terms.push(NodeTerm {
                    corner,
                    perm: pi,
                    plus: (k >= 1).then(|| perm[k - 1]),
                    minus: (k < dim).then(|| perm[k]),
                });
            }
        }
        Ok(Self { norm: norm.clone(), grid: grid.clone(), table, cells, cell_of, terms, reg })
    }

    /// Operator for PDE use; rejects norms without strict convexity.
    pub fn for_pde(grid: &Arc<Grid>, norm: &FinslerNorm) -> Result<Self> {
        check_pde_norm(norm)?;
        Self::new(grid, norm, DEFAULT_REGULARIZATION)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn norm(&self) -> &FinslerNorm {
        &self.norm
    }

    pub fn regularization(&self) -> f64 {
        self.reg
    }

    fn dim(&self) -> usize {
        self.table.dim
    }

    /// Simplex gradients of one cell, written into `g[perm][axis]`.
    fn cell_gradients(&self, u: &[f64], c: usize, g: &mut [[f64; 3]]) {
        let inv_h = 1.0 / self.grid.mesh.h;
        for (pi, (perm, path)) in self.table.perms.iter().zip(&self.table.path_offsets).enumerate() {
            for (k, &axis) in perm.iter().enumerate() {
                g[pi][axis] = (u[c + path[k + 1]] - u[c + path[k]]) * inv_h;
            }
        }
    }

    fn density(&self, g: &[f64]) -> f64 {
        let n = self.dim() as i32;
        if self.reg == 0.0 {
            return self.norm.eval(g).powi(n);
        }
        let f = self.norm.eval(g);
        let e2: f64 = g.iter().map(|v| v * v).sum::<f64>() * self.reg * self.reg;
        (f * f + e2).powf(0.5 * n as f64)
    }

    /// `F_ε^{n−2}(F ∇F + ε² ξ)`, the derivative of `F_εⁿ / n`.
    fn flux(&self, g: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let f = self.norm.eval(g);
        if f == 0.0 {
            out[..n].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.norm.grad_into(g, out);
        let e2 = self.reg * self.reg;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let fe2 = f * f + e2 * g2;
        let scale = if n == 2 { 1.0 } else { fe2.powf(0.5 * (n as f64 - 2.0)) };
        for k in 0..n {
            out[k] = scale * (f * out[k] + e2 * g[k]);
        }
    }

    /// `Σ_T |T| F_εⁿ(∇u|_T)`.
    pub fn dirichlet_integral(&self, u: &[f64]) -> f64 {
        let n = self.dim();
        let vol = self.table.simplex_volume(self.grid.mesh.h);
        let partial: Vec<f64> = self
            .cells
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = [[0.0; 3]; 6];
                let mut acc = 0.0;
                for &c in chunk {
                    self.cell_gradients(u, c, &mut g);
                    for gp in g.iter().take(self.table.perms.len()) {
                        acc += self.density(&gp[..n]);
                    }
                }
                acc
            })
            .collect();
        partial.iter().sum::<f64>() * vol
    }

    /// Same sum restricted to simplices whose vertices all lie in the mask.
    pub fn interior_integral(&self, u: &[f64]) -> f64 {
        let n = self.dim();
        let vol = self.table.simplex_volume(self.grid.mesh.h);
        let mask = &self.grid.mask;
        let partial: Vec<f64> = self
            .cells
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = [[0.0; 3]; 6];
                let mut acc = 0.0;
                for &c in chunk {
                    self.cell_gradients(u, c, &mut g);
                    for (pi, path) in self.table.path_offsets.iter().enumerate() {
                        if path.iter().all(|o| mask[c + o]) {
                            acc += self.density(&g[pi][..n]);
                        }
                    }
                }
                acc
            })
            .collect();
        partial.iter().sum::<f64>() * vol
    }

    /// Fills `out` with `∂/∂u_p (Σ_T |T| F_εⁿ / n)` on mask nodes (zero
    /// elsewhere) and returns `Σ_T |T| F_εⁿ`.
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let n = self.dim();
        let np = self.table.perms.len();
        let stride = np * n;
        let vol = self.table.simplex_volume(self.grid.mesh.h);
        let inv_h = 1.0 / self.grid.mesh.h;
        let mut fluxes = vec![0.0; self.cells.len() * stride];
        let partial: Vec<f64> = fluxes
            .par_chunks_mut(CHUNK * stride)
            .zip(self.cells.par_chunks(CHUNK))
            .map(|(fl, chunk)| {
                let mut g = [[0.0; 3]; 6];
                let mut acc = 0.0;
                for (j, &c) in chunk.iter().enumerate() {
                    self.cell_gradients(u, c, &mut g);
                    for pi in 0..np {
                        acc += self.density(&g[pi][..n]);
                        let dst = &mut fl[j * stride + pi * n..j * stride + pi * n + n];
                        self.flux(&g[pi][..n], dst);
                    }
                }
                acc
            })
            .collect();
        let corner_offsets = &self.table.corner_offsets;
        let mask = &self.grid.mask;
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            *o = 0.0;
            if !mask[p] {
                return;
            }
            let mut acc = 0.0;
            for t in &self.terms {
                let c = p - corner_offsets[t.corner];
                let ci = self.cell_of[c];
                if ci == u32::MAX {
                    continue;
                }
                let base = ci as usize * stride + t.perm * n;
                if let Some(a) = t.plus {
                    acc += fluxes[base + a];
                }
                if let Some(a) = t.minus {
                    acc -= fluxes[base + a];
                }
            }
            *o = acc * vol * inv_h;
        });
        partial.iter().sum::<f64>() * vol
    }

    /// `−Q_n u` at every node (zero off mask).
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if !Arc::ptr_eq(&u.grid, &self.grid) && *u.grid != *self.grid {
            return Err(Error::MeshMismatch);
        }
        let mut out = vec![0.0; u.values.len()];
        self.gradient(&u.values, &mut out);
        let inv = 1.0 / self.grid.mesh.cell_measure();
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(GridFunction { grid: self.grid.clone(), values: out })
    }
}

pub(crate) fn check_pde_norm(norm: &FinslerNorm) -> Result<()> {
    if norm.pde_supported() {
        Ok(())
    } else {
        Err(Error::DegenerateNorm(format!("{:?} is not strictly convex", norm.spec())))
    }
}

/// `Σ_T |T| Fⁿ(∇u|_T)` with the plain (unregularised) norm.
pub fn dirichlet_energy(u: &GridFunction, norm: &FinslerNorm) -> Result<f64> {
    Ok(EnergyOperator::new(&u.grid, norm, 0.0)?.dirichlet_integral(&u.values))
}

/// Energy over simplices lying entirely inside the mask, so that values
/// on the mask are not compared with the zero boundary layer.
pub fn dirichlet_energy_interior(u: &GridFunction, norm: &FinslerNorm) -> Result<f64> {
    Ok(EnergyOperator::new(&u.grid, norm, 0.0)?.interior_integral(&u.values))
}

/// `‖F(∇u)‖_{L^n}`.
pub fn gradient_norm(u: &GridFunction, norm: &FinslerNorm) -> Result<f64> {
    Ok(dirichlet_energy(u, norm)?.powf(1.0 / norm.dim() as f64))
}

/// Nodal residual `−Q_n u − f − α u|u|^{n−2}`.
pub fn qn_residual(u: &GridFunction, f: &GridFunction, alpha: f64, norm: &FinslerNorm) -> Result<GridFunction> {
    if !u.same_grid(f) {
        return Err(Error::MeshMismatch);
    }
    let op = EnergyOperator::for_pde(&u.grid, norm)?;
    let mut r = op.apply(u)?;
    let n = norm.dim() as i32;
    for ((r, u), f) in r.values.iter_mut().zip(&u.values).zip(&f.values) {
        *r -= f + alpha * u * u.abs().powi(n - 2);
    }
    for (r, m) in r.values.iter_mut().zip(&u.grid.mask) {
        if !m {
            *r = 0.0;
        }
    }
    Ok(r)
}
