//! Finsler norms: evaluation, gradients, polar duality and Wulff-ball volume.
//!
//! A [`FinslerNorm`] is an even, convex, positively 1-homogeneous gauge `F`
//! on `R^n` together with its polar `F°(x) = sup ⟨x, ξ⟩ / F(ξ)`. Every family
//! carries a known computation path for the polar: closed forms for the
//! weighted p-norms and quadratic forms, and a direction-grid search refined
//! by golden section for tabulated support functions.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Number of sphere directions used to estimate the anisotropy bounds.
const BOUND_DIRECTIONS: usize = 4096;

/// Panels for the polar-coordinate area formula in 2D.
const KAPPA_PANELS_2D: usize = 8192;

/// Config-file description of a norm.
///
/// ```toml
/// norm = { family = "p_norm", p = 1.5, weights = [1, 1] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NormSpec {
    Euclidean {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    PNorm {
        p: f64,
        weights: Vec<f64>,
    },
    Quadratic {
        matrix: Vec<Vec<f64>>,
    },
    SampledSupport {
        values: Vec<f64>,
    },
}

fn default_dim() -> usize {
    2
}

/// Periodic C¹ cubic interpolant of `F` on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl SupportTable {
    fn new(values: Vec<f64>) -> Result<Self> {
        let m = values.len();
        if m < 8 {
            return Err(Error::InvalidNorm("sampled support needs at least 8 directions".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidNorm("support values must be finite and positive".into()));
        }
        if !m.is_multiple_of(2) {
            return Err(Error::InvalidNorm("sampled support needs an even number of directions".into()));
        }
        let half = m / 2;
        if (0..half).any(|k| (values[k] - values[k + half]).abs() > 1e-9 * values[k]) {
            return Err(Error::InvalidNorm("support table is not even (F(ξ) ≠ F(−ξ))".into()));
        }
        let step = 2.0 * PI / m as f64;
        let slopes = (0..m)
            .map(|k| (values[(k + 1) % m] - values[(k + m - 1) % m]) / (2.0 * step))
            .collect();
        Ok(Self { values, slopes })
    }

    fn step(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    /// Value and angular derivative at angle `theta`.
    fn eval(&self, theta: f64) -> (f64, f64) {
        let m = self.values.len();
        let step = self.step();
        let t = theta.rem_euclid(2.0 * PI) / step;
        let k = (t.floor() as usize).min(m - 1);
        let s = t - k as f64;
        let (y0, y1) = (self.values[k], self.values[(k + 1) % m]);
        let (m0, m1) = (self.slopes[k] * step, self.slopes[(k + 1) % m] * step);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let deriv = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / step;
        (value, deriv)
    }
}

/// A single gauge (either `F` itself or its polar).
#[derive(Debug, Clone, PartialEq)]
enum Gauge {
    Euclidean,
    /// `(Σ w_i |x_i|^p)^{1/p}`; `p = ∞` means `max_i w_i |x_i|`.
    WeightedP { p: f64, weights: Vec<f64> },
    /// `sqrt(xᵀ A x)`.
    Quadratic(DMatrix<f64>),
    /// `|x| · h(θ)` with `h` a periodic spline (2D only).
    Spline(SupportTable),
    /// Polar of a spline gauge, computed by maximisation over directions.
    SplinePolar(SupportTable),
}

impl Gauge {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Gauge::Euclidean => norm2(x),
            Gauge::WeightedP { p, weights } => weighted_p(x, *p, weights),
            Gauge::Quadratic(a) => quad_form(a, x).max(0.0).sqrt(),
            Gauge::Spline(t) => {
                let r = norm2(x);
                if r == 0.0 {
                    0.0
                } else {
                    r * t.eval(x[1].atan2(x[0])).0
                }
            }
            Gauge::SplinePolar(t) => spline_polar(t, x).0,
        }
    }

    /// Writes the gradient into `out`; zero at the origin.
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out[..n].iter_mut().for_each(|v| *v = 0.0);
        match self {
            Gauge::Euclidean => {
                let r = norm2(x);
                if r > 0.0 {
                    for i in 0..n {
                        out[i] = x[i] / r;
                    }
                }
            }
            Gauge::WeightedP { p, weights } => {
                let p = *p;
                if p.is_infinite() {
                    let mut best = 0.0;
                    let mut arg = None;
                    for i in 0..n {
                        let v = weights[i] * x[i].abs();
                        if v > best {
                            best = v;
                            arg = Some(i);
                        }
                    }
                    if let Some(i) = arg {
                        out[i] = weights[i] * x[i].signum();
                    }
                } else if p == 1.0 {
                    for i in 0..n {
                        if x[i] != 0.0 {
                            out[i] = weights[i] * x[i].signum();
                        }
                    }
                } else {
                    let f = weighted_p(x, p, weights);
                    if f > 0.0 {
                        for i in 0..n {
                            if x[i] != 0.0 {
                                out[i] = weights[i] * x[i].signum() * (x[i].abs() / f).powf(p - 1.0);
                            }
                        }
                    }
                }
            }
            Gauge::Quadratic(a) => {
                let f = quad_form(a, x).max(0.0).sqrt();
                if f > 0.0 {
                    for i in 0..n {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += a[(i, j)] * x[j];
                        }
                        out[i] = s / f;
                    }
                }
            }
            Gauge::Spline(t) => {
                let r = norm2(x);
                if r > 0.0 {
                    let (c, s) = (x[0] / r, x[1] / r);
                    let (h, dh) = t.eval(x[1].atan2(x[0]));
                    out[0] = h * c - dh * s;
                    out[1] = h * s + dh * c;
                }
            }
            Gauge::SplinePolar(t) => {
                if norm2(x) > 0.0 {
                    // envelope theorem: the maximising direction divided by F there
                    let (_, theta) = spline_polar(t, x);
                    let (h, _) = t.eval(theta);
                    out[0] = theta.cos() / h;
                    out[1] = theta.sin() / h;
                }
            }
        }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += x[i] * a[(i, j)] * x[j];
        }
    }
    s
}

fn weighted_p(x: &[f64], p: f64, w: &[f64]) -> f64 {
    if p.is_infinite() {
        return x.iter().zip(w).map(|(x, w)| w * x.abs()).fold(0.0, f64::max);
    }
    if p == 1.0 {
        return x.iter().zip(w).map(|(x, w)| w * x.abs()).sum();
    }
    let m = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().zip(w).map(|(x, w)| w * (x.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// `(F°(x), maximising angle)` for a spline gauge.
fn spline_polar(t: &SupportTable, x: &[f64]) -> (f64, f64) {
    let ratio = |theta: f64| (x[0] * theta.cos() + x[1] * theta.sin()) / t.eval(theta).0;
    let samples = (4 * t.values.len()).max(1024);
    let step = 2.0 * PI / samples as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..samples {
        let theta = k as f64 * step;
        let v = ratio(theta);
        if v > best.0 {
            best = (v, theta);
        }
    }
    let (theta, v) = quad::golden_max(ratio, best.1 - step, best.1 + step, 1e-12);
    if v >= best.0 {
        (v, theta)
    } else {
        (best.0, best.1)
    }
}

/// An even, convex, 1-homogeneous gauge together with its polar.
#[derive(Debug, Clone, PartialEq)]
pub struct FinslerNorm {
    primal: Gauge,
    dual: Gauge,
    dim: usize,
    bounds: (f64, f64),
    spec: NormSpec,
}

impl FinslerNorm {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Self::build(Gauge::Euclidean, Gauge::Euclidean, dim, NormSpec::Euclidean { dim })
    }

    /// Weighted p-norm `(Σ w_i |ξ_i|^p)^{1/p}`, `p ∈ [1, ∞]`.
    pub fn p_norm(p: f64, weights: &[f64]) -> Result<Self> {
        let dim = weights.len();
        check_dim(dim)?;
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidNorm(format!("p must lie in [1, ∞], got {p}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidNorm("weights must be finite and positive".into()));
        }
        let primal = Gauge::WeightedP { p, weights: weights.to_vec() };
        let dual = if p == 1.0 || p.is_infinite() {
            Gauge::WeightedP {
                p: if p == 1.0 { f64::INFINITY } else { 1.0 },
                weights: weights.iter().map(|w| 1.0 / w).collect(),
            }
        } else {
            let q = p / (p - 1.0);
            Gauge::WeightedP { p: q, weights: weights.iter().map(|w| w.powf(-1.0 / (p - 1.0))).collect() }
        };
        Self::build(primal, dual, dim, NormSpec::PNorm { p, weights: weights.to_vec() })
    }

    /// `F(ξ) = sqrt(ξᵀ A ξ)` for a symmetric positive-definite `A`.
    pub fn quadratic(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        check_dim(dim)?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidNorm("matrix must be square".into()));
        }
        let a = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
        if (0..dim).any(|i| (0..dim).any(|j| (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * (1.0 + a[(i, j)].abs()))) {
            return Err(Error::InvalidNorm("matrix must be symmetric".into()));
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidNorm("matrix must be positive definite".into()))?;
        let inv = chol.inverse();
        Self::build(Gauge::Quadratic(a), Gauge::Quadratic(inv), dim, NormSpec::Quadratic { matrix: rows.to_vec() })
    }

    /// Planar norm given by its values on `m` equally spaced unit directions
    /// `θ_k = 2πk/m`, interpolated by a periodic C¹ cubic in the angle.
    pub fn sampled_support(values: &[f64]) -> Result<Self> {
        let table = SupportTable::new(values.to_vec())?;
        Self::build(
            Gauge::Spline(table.clone()),
            Gauge::SplinePolar(table),
            2,
            NormSpec::SampledSupport { values: values.to_vec() },
        )
    }

    pub fn from_spec(spec: &NormSpec) -> Result<Self> {
        match spec {
            NormSpec::Euclidean { dim } => Self::euclidean(*dim),
            NormSpec::PNorm { p, weights } => Self::p_norm(*p, weights),
            NormSpec::Quadratic { matrix } => Self::quadratic(matrix),
            NormSpec::SampledSupport { values } => Self::sampled_support(values),
        }
    }

    fn build(primal: Gauge, dual: Gauge, dim: usize, spec: NormSpec) -> Result<Self> {
        let mut norm = Self { primal, dual, dim, bounds: (0.0, 0.0), spec };
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for dir in sphere_directions(dim, BOUND_DIRECTIONS) {
            let v = norm.primal.eval(&dir);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::InvalidNorm("norm must be positive away from the origin".into()));
        }
        norm.bounds = (lo, hi);
        Ok(norm)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    /// Estimated `(a, b)` with `a|ξ| ≤ F(ξ) ≤ b|ξ|`.
    pub fn anisotropy_bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Whether the norm is smooth enough for the PDE solvers.
    ///
    /// The p-norms with `p ∈ {1, ∞}` have kinks that make `Fⁿ` lose strict
    /// convexity, so they are accepted for geometry only.
    pub fn pde_supported(&self) -> bool {
        !matches!(&self.primal, Gauge::WeightedP { p, .. } if *p == 1.0 || p.is_infinite())
    }

    /// Whether gradients come from a closed form (as opposed to a search).
    pub fn analytic_polar(&self) -> bool {
        !matches!(self.dual, Gauge::SplinePolar(_))
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.primal.eval(xi)
    }

    pub fn grad(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroVector);
        }
        let mut out = vec![0.0; self.dim];
        self.primal.grad_into(xi, &mut out);
        Ok(out)
    }

    /// Gradient without the zero check (returns zero at the origin).
    pub fn grad_into(&self, xi: &[f64], out: &mut [f64]) {
        self.primal.grad_into(xi, out);
    }

    pub fn polar(&self, x: &[f64]) -> Result<f64> {
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(self.dual.eval(x))
    }

    /// `F°(x)` with `F°(0) = 0`.
    pub fn polar_eval(&self, x: &[f64]) -> f64 {
        self.dual.eval(x)
    }

    pub fn polar_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroVector);
        }
        let mut out = vec![0.0; self.dim];
        self.dual.grad_into(x, &mut out);
        Ok(out)
    }

    pub fn polar_grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.dual.grad_into(x, out);
    }

    /// Lebesgue measure of the unit Wulff ball `{F° ≤ 1}`.
    pub fn kappa(&self) -> Result<f64> {
        match self.dim {
            2 => {
                if let Gauge::Euclidean = self.dual {
                    return Ok(PI);
                }
                let rho2 = |t: f64| {
                    let f = self.dual.eval(&[t.cos(), t.sin()]);
                    1.0 / (f * f)
                };
                Ok(0.5 * quad::simpson(rho2, 0.0, 2.0 * PI, KAPPA_PANELS_2D))
            }
            3 => {
                // (1/3) ∫_{S²} F°(σ)^{-3} dσ, Gauss-Legendre in cos θ × trapezoid in φ
                let (nodes, weights) = quad::gauss_legendre(128);
                let nphi = 256;
                let dphi = 2.0 * PI / nphi as f64;
                let mut acc = 0.0;
                for (u, w) in nodes.iter().zip(&weights) {
                    let s = (1.0 - u * u).sqrt();
                    for k in 0..nphi {
                        let phi = (k as f64 + 0.5) * dphi;
                        let f = self.dual.eval(&[s * phi.cos(), s * phi.sin(), *u]);
                        acc += w * dphi / (f * f * f);
                    }
                }
                Ok(acc / 3.0)
            }
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    /// Sharp Moser-Trudinger exponent `n^{n/(n-1)} κ_n^{1/(n-1)}`.
    pub fn lambda_n(&self) -> Result<f64> {
        let n = self.dim as f64;
        let kappa = self.kappa()?;
        Ok(n.powf(n / (n - 1.0)) * kappa.powf(1.0 / (n - 1.0)))
    }

    /// Randomised verification of the elementary gauge identities.
    pub fn duality_check(&self, samples: usize, seed: u64) -> DualityReport {
        let n = self.dim;
        let (a, b) = self.bounds;
        let c = b.max(1.0 / a) * 1.01;
        let per_sample: Vec<DualityReport> = (0..samples)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let x = random_nonzero(&mut rng, n);
                let y = random_nonzero(&mut rng, n);
                let mut t: f64 = rng.gen_range(0.1..3.0);
                if rng.gen_bool(0.5) {
                    t = -t;
                }
                self.identities_at(&x, &y, t, c)
            })
            .collect();
        let mut report = DualityReport { samples, gradient_bound: c, ..Default::default() };
        for r in &per_sample {
            report.merge(r);
        }
        report
    }

    fn identities_at(&self, x: &[f64], y: &[f64], t: f64, c: f64) -> DualityReport {
        let n = self.dim;
        let mut r = DualityReport::default();
        let fx = self.eval(x);
        let fy = self.eval(y);
        let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        let fs = self.eval(&sum);
        r.triangle = ((fx - fy).abs() - fs).max(fs - fx - fy).max(0.0);

        let mut gf = vec![0.0; n];
        let mut gp = vec![0.0; n];
        self.grad_into(x, &mut gf);
        self.polar_grad_into(x, &mut gp);
        let (nf, np) = (norm2(&gf), norm2(&gp));
        r.gradient_bounds = [(1.0 / c - nf), (nf - c), (1.0 / c - np), (np - c)]
            .into_iter()
            .fold(0.0, f64::max);

        let px = self.polar_eval(x);
        let euler_f = (dot(x, &gf) - fx).abs();
        let euler_p = (dot(x, &gp) - px).abs();
        r.euler = euler_f.max(euler_p);

        r.unit_gradients = (self.eval(&gp) - 1.0).abs().max((self.polar_eval(&gf) - 1.0).abs());

        let mut fxi = vec![0.0; n];
        self.grad_into(&gp, &mut fxi);
        r.inversion = (0..n).map(|i| (px * fxi[i] - x[i]).abs()).fold(0.0, f64::max);

        let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
        let mut gt = vec![0.0; n];
        self.grad_into(&tx, &mut gt);
        r.sign_homogeneity = (0..n).map(|i| (gt[i] - t.signum() * gf[i]).abs()).fold(0.0, f64::max);
        r
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (2..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn random_nonzero<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm2(&v) > 1e-3 {
            return v;
        }
    }
}

/// Quasi-uniform unit directions: equal angles in 2D, a Fibonacci lattice in 3D.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
    }
}

/// Central finite-difference gradient with step `ε_mach^{1/3}·max(1, |x|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let h = f64::EPSILON.cbrt() * norm2(x).max(1.0);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Maximum violation of each gauge identity over the sampled pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DualityReport {
    pub samples: usize,
    /// Constant `C` used for the gradient bounds.
    pub gradient_bound: f64,
    /// `|F(x) − F(y)| ≤ F(x + y) ≤ F(x) + F(y)`.
    pub triangle: f64,
    /// `1/C ≤ |∇F|, |∇F°| ≤ C`.
    pub gradient_bounds: f64,
    /// `⟨x, ∇F(x)⟩ = F(x)` and the same for `F°`.
    pub euler: f64,
    /// `F(∇F°(x)) = 1` and `F°(∇F(x)) = 1`.
    pub unit_gradients: f64,
    /// `F°(x) F_ξ(∇F°(x)) = x`.
    pub inversion: f64,
    /// `F_ξ(tξ) = sgn(t) F_ξ(ξ)`.
    pub sign_homogeneity: f64,
}

impl DualityReport {
    fn merge(&mut self, other: &DualityReport) {
        self.triangle = self.triangle.max(other.triangle);
        self.gradient_bounds = self.gradient_bounds.max(other.gradient_bounds);
        self.euler = self.euler.max(other.euler);
        self.unit_gradients = self.unit_gradients.max(other.unit_gradients);
        self.inversion = self.inversion.max(other.inversion);
        self.sign_homogeneity = self.sign_homogeneity.max(other.sign_homogeneity);
    }

    pub fn max_violation(&self) -> f64 {
        self.items().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn items(&self) -> [(&'static str, f64); 6] {
        [
            ("triangle", self.triangle),
            ("gradient_bounds", self.gradient_bounds),
            ("euler", self.euler),
            ("unit_gradients", self.unit_gradients),
            ("inversion", self.inversion),
            ("sign_homogeneity", self.sign_homogeneity),
        ]
    }
}
