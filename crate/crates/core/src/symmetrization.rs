//! Decreasing rearrangement, convex symmetrization and anisotropic perimeter.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;
use crate::grid::{Grid, GridFunction};

/// Step function `u*(t)` on `[0, |Ω|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rearrangement {
    /// Values of `|u|` on the mask, sorted in decreasing order.
    pub values: Vec<f64>,
    /// Measure carried by each value.
    pub cell: f64,
}

impl Rearrangement {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        let k = (t / self.cell).floor();
        if k >= self.values.len() as f64 {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    /// Total measure `|Ω|`.
    pub fn support(&self) -> f64 {
        self.values.len() as f64 * self.cell
    }

    /// `∫ (u*)^p dt`.
    pub fn lp_power(&self, p: f64) -> f64 {
        self.values.iter().map(|v| v.powf(p)).sum::<f64>() * self.cell
    }

    /// Measure of `{u* > s}`.
    pub fn distribution(&self, s: f64) -> f64 {
        // values are sorted decreasingly, so the count is a partition point
        self.values.partition_point(|v| *v > s) as f64 * self.cell
    }
}

pub fn decreasing_rearrangement(u: &GridFunction) -> Rearrangement {
    let mut values: Vec<f64> = u.grid.active().iter().map(|&i| u.values[i].abs()).collect();
    values.par_sort_unstable_by(|a, b| b.total_cmp(a));
    Rearrangement { values, cell: u.mesh().cell_measure() }
}

/// `u⋆(x) = u*(κ_n F°(x)ⁿ)` on a fresh origin-centred grid with the same spacing.
pub fn convex_symmetrize(u: &GridFunction, norm: &FinslerNorm) -> Result<GridFunction> {
    let n = u.mesh().dim();
    if norm.dim() != n {
        return Err(Error::InvalidInput("norm and grid dimensions differ".into()));
    }
    let star = decreasing_rearrangement(u);
    let kappa = norm.kappa()?;
    let radius = (star.support() / kappa).powf(1.0 / n as f64);
    let h = u.mesh().h;
    let grid = Grid::new(&Domain::wulff(norm, radius + 2.0 * h * norm.anisotropy_bounds().1), h)?;
    Ok(GridFunction::from_fn(&grid, |x| star.eval(kappa * norm.polar_eval(x).powi(n as i32))))
}

/// Area and anisotropic perimeter of `{u > t}` from a marching-squares interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSetStats {
    pub threshold: f64,
    pub measure: f64,
    pub perimeter: f64,
    /// Set when `{u > t}` has zero measure.
    pub empty: bool,
}

pub fn level_set_stats(u: &GridFunction, t: f64, norm: &FinslerNorm) -> Result<LevelSetStats> {
    let mesh = u.mesh();
    if mesh.dim() != 2 || norm.dim() != 2 {
        return Err(Error::UnsupportedDimension(mesh.dim().max(norm.dim())));
    }
    let (nx, ny) = (mesh.shape[0], mesh.shape[1]);
    let h = mesh.h;
    let v = &u.values;
    let rows: Vec<(f64, f64)> = (0..ny - 1)
        .into_par_iter()
        .map(|j| {
            let mut area = 0.0;
            let mut perim = 0.0;
            for i in 0..nx - 1 {
                let k = i + nx * j;
                // counter-clockwise corners
                let c = [v[k], v[k + 1], v[k + 1 + nx], v[k + nx]];
                let (a, p) = cell_piece(&c, t, norm);
                area += a;
                perim += p;
            }
            (area, perim)
        })
        .collect();
    let area: f64 = rows.iter().map(|r| r.0).sum::<f64>() * h * h;
    let perimeter: f64 = rows.iter().map(|r| r.1).sum::<f64>() * h;
    Ok(LevelSetStats { threshold: t, measure: area, perimeter, empty: area == 0.0 })
}

/// Area (unit cell) and interface length weighted by `F` of the normal for one cell.
fn cell_piece(c: &[f64; 4], t: f64, norm: &FinslerNorm) -> (f64, f64) {
    const CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let inside = c.map(|v| v > t);
    let count = inside.iter().filter(|b| **b).count();
    if count == 0 {
        return (0.0, 0.0);
    }
    if count == 4 {
        return (1.0, 0.0);
    }
    let cross = |a: usize, b: usize| {
        let s = (t - c[a]) / (c[b] - c[a]);
        [
            CORNERS[a][0] + s * (CORNERS[b][0] - CORNERS[a][0]),
            CORNERS[a][1] + s * (CORNERS[b][1] - CORNERS[a][1]),
        ]
    };
    let saddle = count == 2 && inside[0] == inside[2];
    let center = 0.25 * (c[0] + c[1] + c[2] + c[3]);
    if saddle && (center > t) != inside[0] {
        // two separate corner pieces (the inside corners are not connected through the centre)
        let mut area = 0.0;
        let mut perim = 0.0;
        for k in 0..4 {
            if inside[k] {
                let p = cross(k, (k + 1) % 4);
                let q = cross(k, (k + 3) % 4);
                area += polygon_area(&[CORNERS[k], p, q]);
                perim += seg(norm, p, q);
            }
        }
        return (area, perim);
    }
    let mut poly: Vec<([f64; 2], bool)> = Vec::with_capacity(6);
    for k in 0..4 {
        let next = (k + 1) % 4;
        if inside[k] {
            poly.push((CORNERS[k], false));
        }
        if inside[k] != inside[next] {
            poly.push((cross(k, next), true));
        }
    }
    let pts: Vec<[f64; 2]> = poly.iter().map(|p| p.0).collect();
    let area = polygon_area(&pts);
    let mut perim = 0.0;
    let m = poly.len();
    for k in 0..m {
        let (a, b) = (poly[k], poly[(k + 1) % m]);
        // interface pieces join two consecutive crossings
        if a.1 && b.1 {
            perim += seg(norm, a.0, b.0);
        }
    }
    (area, perim)
}

/// `F(ν)·|b − a|`, i.e. `F` of the segment rotated by a right angle.
fn seg(norm: &FinslerNorm, a: [f64; 2], b: [f64; 2]) -> f64 {
    norm.eval(&[b[1] - a[1], a[0] - b[0]])
}

fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let m = p.len();
    0.5 * (0..m)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % m]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
}

/// `P_F(E) / (n κ_n^{1/n} |E|^{1−1/n})` for `E = {u > t}`.
pub fn isoperimetric_ratio(u: &GridFunction, t: f64, norm: &FinslerNorm) -> Result<f64> {
    let stats = level_set_stats(u, t, norm)?;
    if stats.empty {
        return Err(Error::InvalidInput(format!("superlevel set at {t} is empty")));
    }
    let n = 2.0;
    Ok(stats.perimeter / (n * norm.kappa()?.sqrt() * stats.measure.sqrt()))
}

/// Isoperimetric ratio of a planar domain, traced as the zero level of [`Domain::level`].
pub fn domain_isoperimetric_ratio(domain: &Domain, norm: &FinslerNorm, h: f64) -> Result<f64> {
    if domain.dim() != 2 || norm.dim() != 2 {
        return Err(Error::UnsupportedDimension(domain.dim().max(norm.dim())));
    }
    domain.validate()?;
    let (lo, hi) = domain.bbox();
    let pad = 4.0 * h;
    let frame = Domain::Box { lo: lo.iter().map(|v| v - pad).collect(), hi: hi.iter().map(|v| v + pad).collect() };
    let grid = Grid::new(&frame, h)?;
    let u = GridFunction::from_fn(&grid, |x| domain.level(x));
    isoperimetric_ratio(&u, 0.0, norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoareaReport {
    /// `Σ F(∇_h u) hⁿ` with centered differences.
    pub gradient_integral: f64,
    /// Trapezoid rule for `∫₀^max P_F({u > t}) dt`.
    pub perimeter_integral: f64,
    pub discrepancy: f64,
    pub levels: usize,
}

pub fn coarea_check(u: &GridFunction, norm: &FinslerNorm, levels: usize) -> Result<CoareaReport> {
    if levels < 1 {
        return Err(Error::InvalidInput("need at least one level".into()));
    }
    if u.values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("co-area check expects u ≥ 0".into()));
    }
    let mesh = u.mesh();
    let hn = mesh.cell_measure();
    let gradient_integral = (0..mesh.len())
        .into_par_iter()
        .map(|i| norm.eval(&u.centered_gradient(i)))
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        * hn;
    let top = u.max_abs();
    let perimeter_integral = if top == 0.0 {
        0.0
    } else {
        let dt = top / levels as f64;
        let mut stats: Vec<f64> = (0..=levels)
            .into_par_iter()
            .map(|k| level_set_stats(u, k as f64 * dt, norm).map(|s| s.perimeter))
            .collect::<Result<Vec<f64>>>()?;
        // the zero level traces the lattice staircase of the support, so the
        // endpoint value is extrapolated from the first two positive levels
        stats[0] = if levels >= 2 { (2.0 * stats[1] - stats[2]).max(0.0) } else { stats[1] };
        let inner: f64 = stats[1..levels].iter().sum();
        dt * (0.5 * (stats[0] + stats[levels]) + inner)
    };
    let scale = gradient_integral.max(perimeter_integral);
    let discrepancy = if scale == 0.0 { 0.0 } else { (gradient_integral - perimeter_integral).abs() / scale };
    Ok(CoareaReport { gradient_integral, perimeter_integral, discrepancy, levels })
}
