use std::f64::consts::PI;
use std::sync::Arc;

use anisomt::pde::{
    bubble_mass, bubble_partial_mass, dirichlet_solve_from, first_eigenpair, green_function, qn_residual,
    rayleigh_quotient, EnergyOperator, SolverOptions, VecTelemetry,
};
use anisomt::{Domain, FinslerNorm, Grid, GridFunction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn diag41() -> FinslerNorm {
    FinslerNorm::quadratic(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

fn random_field(grid: &Arc<Grid>, domain: &Domain, rng: &mut ChaCha8Rng) -> GridFunction {
    let modes: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0))).collect();
    GridFunction::from_fn(grid, |x| {
        let s: f64 = modes.iter().map(|(a, p, q)| a * (p * x[0]).cos() * (q * x[1]).sin()).sum();
        domain.level(x).max(0.0) * (1.5 + s)
    })
}

#[test]
fn solver_energy_never_increases() {
    for norm in [FinslerNorm::euclidean(2).unwrap(), FinslerNorm::p_norm(3.0, &[1.0, 2.0]).unwrap(), diag41()] {
        let grid = Grid::new(&Domain::disk(1.0), 1.0 / 32.0).unwrap();
        let f = GridFunction::from_fn(&grid, |x| 1.0 + x[0]);
        let mut sink = VecTelemetry::default();
        dirichlet_solve_from(&f, &norm, None, &SolverOptions::default(), Some(&mut sink)).unwrap();
        assert!(sink.rows.len() > 2);
        for w in sink.rows.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-13 * w[0].1.abs(), "{:?} -> {:?}", w[0], w[1]);
        }
    }
}

#[test]
fn rayleigh_quotient_bounded_below_by_first_eigenvalue() {
    let domain = Domain::disk(1.0);
    let grid = Grid::new(&domain, 1.0 / 32.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for norm in [FinslerNorm::euclidean(2).unwrap(), diag41()] {
        let pair = first_eigenpair(&grid, &norm).unwrap();
        for _ in 0..50 {
            let v = random_field(&grid, &domain, &mut rng);
            let q = rayleigh_quotient(&v, &norm).unwrap();
            assert!(q >= pair.lambda1 * (1.0 - 1e-8), "{q} < {}", pair.lambda1);
        }
    }
}

#[test]
fn quadratic_eigenvalue_matches_mapped_euclidean_problem() {
    // F(ξ) = |A^{1/2} ξ| on (0,2)×(0,1) is the Euclidean problem on the unit square after y = A^{-1/2} x
    let h = 1.0 / 64.0;
    let rect = Grid::new(&Domain::Box { lo: vec![0.0, 0.0], hi: vec![2.0, 1.0] }, h).unwrap();
    let square = Grid::new(&Domain::square(1.0), h).unwrap();
    let aniso = first_eigenpair(&rect, &diag41()).unwrap().lambda1;
    let iso = first_eigenpair(&square, &FinslerNorm::euclidean(2).unwrap()).unwrap().lambda1;
    assert!((aniso / iso - 1.0).abs() < 0.02, "{aniso} vs {iso}");
    assert!((iso / (2.0 * PI * PI) - 1.0).abs() < 0.02);
}

#[test]
fn eigenvalue_scales_like_s_to_minus_n() {
    let norm = FinslerNorm::p_norm(3.0, &[1.0, 2.0]).unwrap();
    let small = first_eigenpair(&Grid::new(&Domain::disk(0.5), 1.0 / 64.0).unwrap(), &norm).unwrap().lambda1;
    let large = first_eigenpair(&Grid::new(&Domain::disk(1.0), 1.0 / 32.0).unwrap(), &norm).unwrap().lambda1;
    assert!((small / (4.0 * large) - 1.0).abs() < 1e-9, "{small} vs {large}");
}

#[test]
fn p3_solution_is_wulff_radial() {
    let norm = FinslerNorm::p_norm(3.0, &[1.0, 1.0]).unwrap();
    let h = 1.0 / 64.0;
    let grid = Grid::new(&Domain::wulff(&norm, 1.0), h).unwrap();
    let f = GridFunction::from_fn(&grid, |_| 1.0);
    let (u, _) = dirichlet_solve_from(&f, &norm, None, &SolverOptions::default(), None).unwrap();
    let b = norm.anisotropy_bounds().1;
    let top = u.max_abs();
    for k in 1..10 {
        let t = top * k as f64 / 10.0;
        let (mut inner_max, mut outer_min) = (0.0f64, f64::INFINITY);
        for &i in grid.active() {
            let r = norm.polar_eval(&grid.mesh.coords(i));
            if u.values[i] > t {
                inner_max = inner_max.max(r);
            } else {
                outer_min = outer_min.min(r);
            }
        }
        // the level set {u = t} lies in a Wulff annulus at most two cells thick
        assert!(inner_max - outer_min <= 2.0 * b * h, "t={t}: {outer_min}..{inner_max}");
    }
}

#[test]
fn bubble_masses() {
    for norm in [FinslerNorm::euclidean(2).unwrap(), FinslerNorm::euclidean(3).unwrap(), diag41()] {
        let total = bubble_mass(&norm, 1e4).unwrap().total;
        assert!((total - 1.0).abs() < 1e-3, "{:?}: {total}", norm.spec());
        let mut last = 0.0;
        for r in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4, 1e6] {
            let m = bubble_partial_mass(&norm, r).unwrap();
            assert!(m >= last && m <= 1.0 + 1e-6, "R={r}: {m}");
            last = m;
        }
    }
}

#[test]
fn green_remainder_vanishes_at_the_pole() {
    let norm = diag41();
    let mut last = f64::INFINITY;
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let grid = Grid::new(&Domain::disk(1.0), h).unwrap();
        let fit = green_function(&grid, &norm, 2.0, &[0.0, 0.0]).unwrap();
        assert!(fit.psi_inner.abs() < last, "h={h}: {} after {last}", fit.psi_inner);
        assert!(fit.c_g.abs() < 0.05);
        last = fit.psi_inner.abs();
    }
}

#[test]
fn green_function_solves_the_equation_away_from_the_pole() {
    let norm = diag41();
    let grid = Grid::new(&Domain::disk(1.0), 1.0 / 64.0).unwrap();
    let alpha = 2.0;
    let fit = green_function(&grid, &norm, alpha, &[0.0, 0.0]).unwrap();
    let zero = GridFunction::zeros(&grid);
    let r = qn_residual(&fit.green, &zero, alpha, &norm).unwrap();
    let scale = fit.green.max_abs().max(1.0);
    let worst = grid
        .active()
        .iter()
        .filter(|&&i| norm.polar_eval(&grid.mesh.coords(i)) > 0.25)
        .map(|&i| r.values[i].abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4 * scale, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_gradient_matches_directional_differences(seed in any::<u64>(), which in 0usize..3) {
        let norm = [FinslerNorm::p_norm(3.0, &[1.0, 2.0]).unwrap(), diag41(), FinslerNorm::euclidean(3).unwrap()]
            [which]
            .clone();
        let grid = Grid::new(&Domain::ball(norm.dim(), 1.0), 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            grid.mask.iter().map(|m| if *m { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()
        };
        let u = pick(&mut rng);
        let d = pick(&mut rng);
        let op = EnergyOperator::new(&grid, &norm, 1e-3).unwrap();
        let mut grad = vec![0.0; u.len()];
        op.gradient(&u, &mut grad);
        let n = norm.dim() as f64;
        let analytic: f64 = grad.iter().zip(&d).map(|(g, v)| g * v).sum();
        let s = 1e-5;
        let shift = |sign: f64| -> Vec<f64> { u.iter().zip(&d).map(|(a, b)| a + sign * s * b).collect() };
        let fd = (op.dirichlet_integral(&shift(1.0)) - op.dirichlet_integral(&shift(-1.0))) / (2.0 * s * n);
        prop_assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "{fd} vs {analytic}");
    }
}
