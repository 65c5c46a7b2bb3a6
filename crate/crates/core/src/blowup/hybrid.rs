//! Integrals of fields that are Wulff-radial near a point and piecewise
//! linear on the lattice elsewhere.
//!
//! Inside `F°(x − x₀) ≤ ρ` the field is `g(F°(x − x₀))` and the integral
//! reduces to `nκ_n ∫₀^ρ f(g, |g'|) rⁿ⁻¹ dr`, done by adaptive quadrature.
//! Outside, every Kuhn simplex of every lattice cell is sampled with the
//! same reference points, so piecewise-constant gradients are weighted
//! exactly by simplex volume.

use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::Result;
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction, Mesh};
use crate::quad;

const CELLS_PER_CHUNK: usize = 512;

/// Quintic smoothstep on `[0, 1]` and its derivative.
pub(crate) fn smoothstep(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        (s * s * s * (10.0 - 15.0 * s + 6.0 * s * s), 30.0 * s * s * (1.0 - s) * (1.0 - s))
    }
}

/// A sample point together with its lattice simplex.
pub(crate) struct Probe<'a> {
    pub x: &'a [f64],
    pub base: usize,
    pub t: &'a [f64],
    /// Axes in the order the simplex path visits them.
    pub order: &'a [usize],
    pub strides: &'a [usize],
    pub h: f64,
}

impl Probe<'_> {
    /// Value and gradient of the piecewise-linear interpolant of `f` on this simplex.
    pub fn p1(&self, f: &GridFunction, grad: &mut [f64]) -> f64 {
        let mut idx = self.base;
        let mut v = f.values[idx];
        let mut acc = v;
        for &axis in self.order {
            idx += self.strides[axis];
            let next = f.values[idx];
            grad[axis] = (next - v) / self.h;
            acc += (next - v) * self.t[axis];
            v = next;
        }
        acc
    }
}

pub(crate) trait Field: Sync {
    /// Profile `g(r)` and `g'(r)` on `F°(x − x₀) ≤ ρ`.
    fn radial(&self, r: f64) -> (f64, f64);
    /// Value at a sample with `F°(x − x₀) > ρ`; writes the gradient.
    fn outer(&self, p: &Probe, grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone)]
pub(crate) struct Hybrid {
    pub norm: FinslerNorm,
    pub domain: Domain,
    pub mesh: Mesh,
    pub x0: Vec<f64>,
    pub rho: f64,
    breaks: Vec<f64>,
    strides: Vec<usize>,
    cells: Vec<usize>,
    perms: Vec<Vec<usize>>,
    /// Sorted reference coordinates and their weight as a fraction of a cell.
    refs: Vec<(Vec<f64>, f64)>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Descending representatives of an `mⁿ` tensor grid with their multiplicity weights.
fn reference_points(n: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
    let total = m.pow(n as u32);
    let mut out = Vec::new();
    for k in 0..total {
        let mut rest = k;
        let y: Vec<f64> = (0..n)
            .map(|_| {
                let j = rest % m;
                rest /= m;
                (j as f64 + 0.5) / m as f64
            })
            .collect();
        if y.windows(2).any(|w| w[1] > w[0]) {
            continue;
        }
        let mut weight = 1.0 / total as f64;
        let mut run = 1;
        for i in 1..=n {
            if i < n && y[i] == y[i - 1] {
                run += 1;
            } else {
                weight /= factorial(run);
                run = 1;
            }
        }
        out.push((y, weight));
    }
    out
}

impl Hybrid {
    pub fn new(
        norm: &FinslerNorm,
        domain: &Domain,
        mesh: &Mesh,
        x0: &[f64],
        rho: f64,
        breaks: &[f64],
        sub: usize,
    ) -> Self {
        let n = mesh.dim();
        let mut b: Vec<f64> = breaks.iter().copied().filter(|r| *r > 0.0 && *r < rho).collect();
        b.push(0.0);
        b.push(rho);
        b.sort_by(f64::total_cmp);
        b.dedup();
        let cells = (0..mesh.len())
            .filter(|&i| {
                let ijk = mesh.unravel(i);
                ijk.iter().zip(&mesh.shape).all(|(a, m)| a + 1 < *m)
            })
            .collect();
        Self {
            norm: norm.clone(),
            domain: domain.clone(),
            mesh: mesh.clone(),
            x0: x0.to_vec(),
            rho,
            breaks: b,
            strides: mesh.strides(),
            cells,
            perms: permutations(n),
            refs: reference_points(n, sub.max(1)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// `∫_Ω f(u, F(∇u))` for the field `u`.
    pub fn integrate<F: Fn(f64, f64) -> f64 + Sync>(&self, field: &dyn Field, f: F) -> f64 {
        self.radial_part(field, &f) + self.outer_part(field, &f)
    }

    pub fn radial_part<F: Fn(f64, f64) -> f64>(&self, field: &dyn Field, f: &F) -> f64 {
        let n = self.dim() as f64;
        let kappa = self.norm.kappa().unwrap_or(f64::NAN);
        let integrand = |r: f64| {
            let (g, dg) = field.radial(r);
            f(g, dg.abs()) * r.powf(n - 1.0)
        };
        n * kappa * quad::adaptive_with_breaks(integrand, &self.breaks, 1e-300, 1e-13).0
    }

    pub fn outer_part<F: Fn(f64, f64) -> f64 + Sync>(&self, field: &dyn Field, f: &F) -> f64 {
        let weight = self.mesh.cell_measure();
        let parts: Vec<f64> = self
            .cells
            .par_chunks(CELLS_PER_CHUNK)
            .map(|chunk| {
                let mut acc = 0.0;
                self.visit(chunk, |p, w, grad| {
                    let v = field.outer(p, grad);
                    acc += w * f(v, self.norm.eval(grad));
                });
                acc
            })
            .collect();
        parts.iter().sum::<f64>() * weight
    }

    /// Outer samples whose value satisfies `pred`, plus one if the radial core does at `r = 0`.
    pub fn count<P: Fn(f64) -> bool + Sync>(&self, field: &dyn Field, pred: P) -> usize {
        let core = usize::from(pred(field.radial(0.0).0));
        let outer: usize = self
            .cells
            .par_chunks(CELLS_PER_CHUNK)
            .map(|chunk| {
                let mut c = 0;
                self.visit(chunk, |p, _, grad| {
                    if pred(field.outer(p, grad)) {
                        c += 1;
                    }
                });
                c
            })
            .sum();
        core + outer
    }

    fn visit<V: FnMut(&Probe, f64, &mut [f64])>(&self, cells: &[usize], mut visit: V) {
        let n = self.dim();
        let h = self.mesh.h;
        let mut corner = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut grad = vec![0.0; n];
        for &base in cells {
            self.mesh.coords_into(base, &mut corner);
            for order in &self.perms {
                for (y, w) in &self.refs {
                    for (k, &axis) in order.iter().enumerate() {
                        t[axis] = y[k];
                    }
                    for k in 0..n {
                        x[k] = corner[k] + h * t[k];
                        d[k] = x[k] - self.x0[k];
                    }
                    if self.norm.polar_eval(&d) <= self.rho || !self.domain.contains(&x) {
                        continue;
                    }
                    let probe = Probe { x: &x, base, t: &t, order, strides: &self.strides, h };
                    visit(&probe, *w, &mut grad);
                }
            }
        }
    }

    /// Nodal values of the field on the mask.
    pub fn sample(&self, field: &dyn Field, grid: &Arc<Grid>) -> Result<GridFunction> {
        let n = self.dim();
        let identity: Vec<usize> = (0..n).collect();
        let zero = vec![0.0; n];
        let values = (0..grid.mesh.len())
            .into_par_iter()
            .map(|i| {
                if !grid.mask[i] {
                    return 0.0;
                }
                let x = grid.mesh.coords(i);
                let d: Vec<f64> = x.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
                let r = self.norm.polar_eval(&d);
                if r <= self.rho {
                    field.radial(r).0
                } else {
                    let mut grad = vec![0.0; n];
                    let probe =
                        Probe { x: &x, base: i, t: &zero, order: &identity, strides: &self.strides, h: grid.h() };
                    field.outer(&probe, &mut grad)
                }
            })
            .collect();
        GridFunction::from_values(grid, values)
    }
}
