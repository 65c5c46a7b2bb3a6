//! Uniform node lattices, Dirichlet masks and grid functions.
//!
//! Values live on the nodes of a lattice anchored at integer multiples of
//! `h`; each node carries measure `hⁿ`. A node belongs to the mask when it
//! lies strictly inside the domain, and off-mask values are held at zero.
//! Every unit cell is split into `n!` Kuhn simplices, which gives the
//! piecewise-linear interpolant used by the energy and by point evaluation.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Nodes kept between the domain bounding box and the lattice edge.
const PAD: i64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub shape: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
}

impl Mesh {
    /// Lattice covering `[lo, hi]` with two spare layers on each side.
    pub fn covering(lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("mesh spacing must be positive, got {h}")));
        }
        let n = lo.len();
        if !(2..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        let mut shape = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        for i in 0..n {
            let first = (lo[i] / h).floor() as i64 - PAD;
            let last = (hi[i] / h).ceil() as i64 + PAD;
            shape.push((last - first + 1) as usize);
            origin.push(first as f64 * h);
        }
        Ok(Self { shape, h, origin })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Linear-index stride along each axis (axis 0 fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.dim());
        let mut acc = 1;
        for &m in &self.shape {
            s.push(acc);
            acc *= m;
        }
        s
    }

    pub fn index(&self, ijk: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, &m) in ijk.iter().zip(&self.shape) {
            idx += i * stride;
            stride *= m;
        }
        idx
    }

    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&m| {
                let i = idx % m;
                idx /= m;
                i
            })
            .collect()
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords_into(idx, &mut x);
        x
    }

    pub fn coords_into(&self, mut idx: usize, out: &mut [f64]) {
        for (k, &m) in self.shape.iter().enumerate() {
            out[k] = self.origin[k] + (idx % m) as f64 * self.h;
            idx /= m;
        }
    }

    /// Nearest node to `x`, if inside the lattice.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut ijk = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let t = ((x[k] - self.origin[k]) / self.h).round();
            if t < 0.0 || t >= self.shape[k] as f64 {
                return None;
            }
            ijk.push(t as usize);
        }
        Some(self.index(&ijk))
    }
}

/// A mesh together with the Dirichlet mask of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub mesh: Mesh,
    pub mask: Vec<bool>,
    active: Vec<usize>,
}

impl Grid {
    pub fn new(domain: &Domain, h: f64) -> Result<Arc<Self>> {
        domain.validate()?;
        let (lo, hi) = domain.bbox();
        let mesh = Mesh::covering(&lo, &hi, h)?;
        let mask: Vec<bool> = (0..mesh.len())
            .into_par_iter()
            .map(|i| domain.contains(&mesh.coords(i)))
            .collect();
        Self::from_mask(mesh, mask)
    }

    pub fn from_mask(mesh: Mesh, mask: Vec<bool>) -> Result<Arc<Self>> {
        if mask.len() != mesh.len() {
            return Err(Error::MeshMismatch);
        }
        let mut mask = mask;
        // the outermost layer always carries the boundary condition
        for (i, m) in mask.iter_mut().enumerate() {
            let ijk = mesh.unravel(i);
            if ijk.iter().zip(&mesh.shape).any(|(a, s)| *a == 0 || *a + 1 == *s) {
                *m = false;
            }
        }
        let active = mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
        Ok(Arc::new(Self { mesh, mask, active }))
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn h(&self) -> f64 {
        self.mesh.h
    }

    /// Indices of mask nodes in increasing order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Discrete measure of the domain, `#mask · hⁿ`.
    pub fn area(&self) -> f64 {
        self.active.len() as f64 * self.mesh.cell_measure()
    }

    /// Lattice (taxicab) distance of each node to the nearest off-mask node, times `h`.
    pub fn distance_to_boundary(&self) -> Vec<f64> {
        let n = self.mesh.len();
        let strides = self.mesh.strides();
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        for i in 0..n {
            if !self.mask[i] {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let ijk = self.mesh.unravel(i);
            for (k, &s) in strides.iter().enumerate() {
                for dir in [-1i64, 1] {
                    let t = ijk[k] as i64 + dir;
                    if t < 0 || t >= self.mesh.shape[k] as i64 {
                        continue;
                    }
                    let j = (i as i64 + dir * s as i64) as usize;
                    if dist[j] == usize::MAX {
                        dist[j] = dist[i] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        dist.iter().map(|d| *d as f64 * self.mesh.h).collect()
    }
}

/// Kuhn decomposition of the unit cell: for every permutation of the axes,
/// the path `0 → e_σ1 → e_σ1 + e_σ2 → …` spans one simplex.
#[derive(Debug, Clone)]
pub struct KuhnTable {
    pub dim: usize,
    pub perms: Vec<Vec<usize>>,
    /// Linear offsets (relative to the cell's lower corner) of the path vertices.
    pub path_offsets: Vec<Vec<usize>>,
    pub corner_offsets: Vec<usize>,
}

impl KuhnTable {
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let strides = mesh.strides();
        let perms = permutations(dim);
        let path_offsets = perms
            .iter()
            .map(|p| {
                let mut off = vec![0];
                let mut acc = 0;
                for &axis in p {
                    acc += strides[axis];
                    off.push(acc);
                }
                off
            })
            .collect();
        let corner_offsets = (0..1usize << dim)
            .map(|bits| (0..dim).filter(|k| bits >> k & 1 == 1).map(|k| strides[k]).sum())
            .collect();
        Self { dim, perms, path_offsets, corner_offsets }
    }

    pub fn simplex_volume(&self, h: f64) -> f64 {
        let fact: usize = (1..=self.dim).product();
        h.powi(self.dim as i32) / fact as f64
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.mesh.len()] }
    }

    /// Samples `f` at mask nodes.
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(grid: &Arc<Grid>, f: F) -> Self {
        let mesh = &grid.mesh;
        let values = (0..mesh.len())
            .into_par_iter()
            .map(|i| if grid.mask[i] { f(&mesh.coords(i)) } else { 0.0 })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.mesh.len() {
            return Err(Error::MeshMismatch);
        }
        for (v, m) in values.iter_mut().zip(&grid.mask) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.grid.mesh
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        let values = self
            .values
            .par_iter()
            .zip(self.grid.mask.par_iter())
            .map(|(v, m)| if *m { f(*v) } else { 0.0 })
            .collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `Σ |u|^p hⁿ`.
    pub fn lp_power(&self, p: f64) -> f64 {
        self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.mesh().cell_measure()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_power(p).powf(1.0 / p)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.mesh().cell_measure()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest value and its node (first in index order on ties).
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for &i in self.grid.active() {
            if self.values[i] > best.1 {
                best = (i, self.values[i]);
            }
        }
        best
    }

    /// Piecewise-linear interpolant on the Kuhn simplices; zero outside the lattice.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        match self.locate(x) {
            Some((base, t, order)) => {
                let strides = self.mesh().strides();
                let mut idx = base;
                let mut v = self.values[idx];
                let mut acc = v;
                for &axis in &order {
                    idx += strides[axis];
                    let next = self.values[idx];
                    acc += (next - v) * t[axis];
                    v = next;
                }
                acc
            }
            None => 0.0,
        }
    }

    /// Gradient of the interpolant (constant on each simplex).
    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let n = self.mesh().dim();
        let mut g = vec![0.0; n];
        if let Some((base, _, order)) = self.locate(x) {
            let strides = self.mesh().strides();
            let mut idx = base;
            for &axis in &order {
                let next = idx + strides[axis];
                g[axis] = (self.values[next] - self.values[idx]) / self.mesh().h;
                idx = next;
            }
        }
        g
    }

    /// Lower cell corner, local coordinates and descending-coordinate axis order.
    fn locate(&self, x: &[f64]) -> Option<(usize, Vec<f64>, Vec<usize>)> {
        let mesh = self.mesh();
        let n = mesh.dim();
        let mut ijk = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for k in 0..n {
            let s = (x[k] - mesh.origin[k]) / mesh.h;
            if !(s >= 0.0 && s < (mesh.shape[k] - 1) as f64) {
                return None;
            }
            let i = s.floor();
            ijk.push(i as usize);
            t.push(s - i);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| t[*b].total_cmp(&t[*a]).then(a.cmp(b)));
        Some((mesh.index(&ijk), t, order))
    }

    /// Centered-difference gradient at a node.
    pub fn centered_gradient(&self, idx: usize) -> Vec<f64> {
        let mesh = self.mesh();
        let strides = mesh.strides();
        let ijk = mesh.unravel(idx);
        (0..mesh.dim())
            .map(|k| {
                if ijk[k] == 0 || ijk[k] + 1 == mesh.shape[k] {
                    0.0
                } else {
                    (self.values[idx + strides[k]] - self.values[idx - strides[k]]) / (2.0 * mesh.h)
                }
            })
            .collect()
    }

    /// CSV layout: a header line `nx,ny,h,origin_x,origin_y`, its values, then
    /// one line per row of constant y with values in increasing x.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mesh = self.mesh();
        if mesh.dim() != 2 {
            return Err(Error::UnsupportedDimension(mesh.dim()));
        }
        let (nx, ny) = (mesh.shape[0], mesh.shape[1]);
        writeln!(w, "nx,ny,h,origin_x,origin_y")?;
        writeln!(w, "{},{},{:.16e},{:.16e},{:.16e}", nx, ny, mesh.h, mesh.origin[0], mesh.origin[1])?;
        for j in 0..ny {
            let row: Vec<String> = (0..nx).map(|i| format!("{:.16e}", self.values[i + nx * j])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV layout; mask = nodes off the outer layer with nonzero value.
    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines();
        lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        let head: Vec<f64> = parse_row(lines.next().ok_or_else(|| Error::Parse("missing header values".into()))?)?;
        if head.len() != 5 {
            return Err(Error::Parse("header needs nx,ny,h,origin_x,origin_y".into()));
        }
        let (nx, ny) = (head[0] as usize, head[1] as usize);
        let mesh = Mesh { shape: vec![nx, ny], h: head[2], origin: vec![head[3], head[4]] };
        let mut values = Vec::with_capacity(nx * ny);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = parse_row(line)?;
            if row.len() != nx {
                return Err(Error::Parse(format!("row has {} values, expected {nx}", row.len())));
            }
            values.extend(row);
        }
        if values.len() != nx * ny {
            return Err(Error::Parse("wrong number of rows".into()));
        }
        let mask = values.iter().map(|v| *v != 0.0).collect();
        let grid = Grid::from_mask(mesh, mask)?;
        Self::from_values(&grid, values)
    }

    /// Binary layout: `GFN1`, u32 dim, u64 shape per axis, f64 h, f64 origin
    /// per axis, f64 values (axis 0 fastest), one mask byte per node. All
    /// little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mesh = self.mesh();
        w.write_all(b"GFN1")?;
        w.write_all(&(mesh.dim() as u32).to_le_bytes())?;
        for &s in &mesh.shape {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        w.write_all(&mesh.h.to_le_bytes())?;
        for &o in &mesh.origin {
            w.write_all(&o.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        let mask: Vec<u8> = self.grid.mask.iter().map(|m| *m as u8).collect();
        w.write_all(&mask)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"GFN1" {
            return Err(Error::Parse("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut shape = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut b8)?;
            shape.push(u64::from_le_bytes(b8) as usize);
        }
        r.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        let mut origin = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut b8)?;
            origin.push(f64::from_le_bytes(b8));
        }
        let mesh = Mesh { shape, h, origin };
        let mut values = Vec::with_capacity(mesh.len());
        for _ in 0..mesh.len() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let mut mask = vec![0u8; mesh.len()];
        r.read_exact(&mut mask)?;
        let grid = Grid::from_mask(mesh, mask.into_iter().map(|b| b != 0).collect())?;
        Self::from_values(&grid, values)
    }
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
        .collect()
}
