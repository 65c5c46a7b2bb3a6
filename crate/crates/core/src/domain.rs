//! Bounded domains described by membership predicates.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::finsler::FinslerNorm;

#[derive(Debug, Clone)]
pub enum Domain {
    /// Euclidean ball (disk in 2D).
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box `∏ (lo_i, hi_i)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Simple planar polygon, vertices in order.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Wulff ball `{F°(x − x₀) < r}`.
    Wulff { norm: FinslerNorm, center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn disk(radius: f64) -> Self {
        Domain::Ball { center: vec![0.0, 0.0], radius }
    }

    pub fn ball(dim: usize, radius: f64) -> Self {
        Domain::Ball { center: vec![0.0; dim], radius }
    }

    pub fn square(side: f64) -> Self {
        Domain::Box { lo: vec![0.0, 0.0], hi: vec![side, side] }
    }

    pub fn wulff(norm: &FinslerNorm, radius: f64) -> Self {
        Domain::Wulff { norm: norm.clone(), center: vec![0.0; norm.dim()], radius }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Domain::Ball { center, radius } => (2..=3).contains(&center.len()) && *radius > 0.0,
            Domain::Box { lo, hi } => {
                (2..=3).contains(&lo.len()) && lo.len() == hi.len() && lo.iter().zip(hi).all(|(a, b)| a < b)
            }
            Domain::Polygon { vertices } => vertices.len() >= 3 && polygon_area(vertices).abs() > 0.0,
            Domain::Wulff { norm, center, radius } => center.len() == norm.dim() && *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("malformed domain {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } | Domain::Wulff { center, .. } => center.len(),
            Domain::Box { lo, .. } => lo.len(),
            Domain::Polygon { .. } => 2,
        }
    }

    /// Strict membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() < radius * radius
            }
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a < *v && *v < *b),
            Domain::Polygon { vertices } => point_in_polygon(vertices, x[0], x[1]),
            Domain::Wulff { norm, center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                norm.polar_eval(&d) < *radius
            }
        }
    }

    /// Continuous function that is positive inside, zero on the boundary and negative outside.
    pub fn level(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Ball { center, radius } => {
                radius - x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
            }
            Domain::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| (v - a).min(b - v)).fold(f64::INFINITY, f64::min)
            }
            Domain::Polygon { vertices } => {
                let d = polygon_edge_distance(vertices, x[0], x[1]);
                if point_in_polygon(vertices, x[0], x[1]) { d } else { -d }
            }
            Domain::Wulff { norm, center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                radius - norm.polar_eval(&d)
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Polygon { vertices } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for v in vertices {
                    for i in 0..2 {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                (lo, hi)
            }
            Domain::Wulff { norm, center, radius } => {
                // support of the Wulff ball in direction e_i is r·F(e_i)
                let n = center.len();
                let mut lo = Vec::with_capacity(n);
                let mut hi = Vec::with_capacity(n);
                for i in 0..n {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    let ext = radius * norm.eval(&e);
                    lo.push(center[i] - ext);
                    hi.push(center[i] + ext);
                }
                (lo, hi)
            }
        }
    }

    /// Exact Lebesgue measure.
    pub fn measure(&self) -> Result<f64> {
        Ok(match self {
            Domain::Ball { center, radius } => match center.len() {
                2 => PI * radius * radius,
                3 => 4.0 / 3.0 * PI * radius.powi(3),
                d => return Err(Error::UnsupportedDimension(d)),
            },
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Domain::Polygon { vertices } => polygon_area(vertices).abs(),
            Domain::Wulff { norm, radius, .. } => norm.kappa()? * radius.powi(norm.dim() as i32),
        })
    }

    /// Image under `x ↦ s·x`.
    pub fn scaled(&self, s: f64) -> Self {
        let sv = |v: &Vec<f64>| v.iter().map(|x| s * x).collect::<Vec<_>>();
        match self {
            Domain::Ball { center, radius } => Domain::Ball { center: sv(center), radius: s * radius },
            Domain::Box { lo, hi } => Domain::Box { lo: sv(lo), hi: sv(hi) },
            Domain::Polygon { vertices } => {
                Domain::Polygon { vertices: vertices.iter().map(|v| [s * v[0], s * v[1]]).collect() }
            }
            Domain::Wulff { norm, center, radius } => {
                Domain::Wulff { norm: norm.clone(), center: sv(center), radius: s * radius }
            }
        }
    }

    /// Largest `r` with `{F°(x − x₀) ≤ r}` inside the domain, up to `probe` directions.
    pub fn inscribed_wulff_radius(&self, norm: &FinslerNorm, x0: &[f64], probe: usize) -> f64 {
        let dirs = crate::finsler::sphere_directions(norm.dim(), probe);
        let mut best = f64::INFINITY;
        for d in dirs {
            // boundary point of the unit Wulff ball in direction d
            let unit = norm.polar_eval(&d);
            let w: Vec<f64> = d.iter().map(|v| v / unit).collect();
            let (mut lo, mut hi) = (0.0, 1.0);
            let inside = |r: f64| {
                let p: Vec<f64> = x0.iter().zip(&w).map(|(a, b)| a + r * b).collect();
                self.contains(&p)
            };
            while inside(hi) {
                hi *= 2.0;
                if hi > 1e6 {
                    break;
                }
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.min(lo);
        }
        best
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let m = v.len();
    0.5 * (0..m).map(|i| {
        let (a, b) = (v[i], v[(i + 1) % m]);
        a[0] * b[1] - b[0] * a[1]
    })
    .sum::<f64>()
}

fn point_in_polygon(v: &[[f64; 2]], x: f64, y: f64) -> bool {
    let m = v.len();
    let mut inside = false;
    let mut j = m - 1;
    for i in 0..m {
        let (xi, yi) = (v[i][0], v[i][1]);
        let (xj, yj) = (v[j][0], v[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn polygon_edge_distance(v: &[[f64; 2]], x: f64, y: f64) -> f64 {
    let m = v.len();
    (0..m)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % m]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let t = (((x - a[0]) * ex + (y - a[1]) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            (x - a[0] - t * ex).hypot(y - a[1] - t * ey)
        })
        .fold(f64::INFINITY, f64::min)
}
