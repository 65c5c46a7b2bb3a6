//! End-to-end acceptance run. Each criterion prints one line and the process
//! exits nonzero if any of them fails or overruns its time budget.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use anisomt::blowup::{build_glued_bubble, divergence_demo, harmonic_identities, GluedParams};
use anisomt::mt::{subcritical_ladder, MtOptions};
use anisomt::pde::{
    bubble, bubble_mass, bubble_profile, bubble_residual, first_eigenpair, green_function, EnergyOperator,
};
use anisomt::symmetrization::{coarea_check, domain_isoperimetric_ratio};
use anisomt::{Domain, FinslerNorm, Grid, GridFunction};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn euclid() -> FinslerNorm {
    FinslerNorm::euclidean(2).unwrap()
}

fn diag41() -> FinslerNorm {
    FinslerNorm::quadratic(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

fn sharp_constant() -> Outcome {
    let lambda = euclid().lambda_n().map_err(|e| e.to_string())?;
    let err = (lambda - 4.0 * PI).abs();
    check(err < 1e-10, format!("lambda_2 = {lambda:.15}, |lambda_2 - 4pi| = {err:.1e}"))
}

fn duality_suite() -> Outcome {
    let norms = [
        ("euclidean", euclid()),
        ("p1.5", FinslerNorm::p_norm(1.5, &[1.0, 1.0]).unwrap()),
        ("p2", FinslerNorm::p_norm(2.0, &[1.0, 1.0]).unwrap()),
        ("p3", FinslerNorm::p_norm(3.0, &[1.0, 1.0]).unwrap()),
        ("diag41", diag41()),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (k, (name, norm)) in norms.iter().enumerate() {
        let v = norm.duality_check(1000, 1000 + k as u64).max_violation();
        worst = worst.max(v);
        parts.push(format!("{name} {v:.1e}"));
    }
    check(worst < 1e-6, format!("max violation over 1000 samples: {}", parts.join(", ")))
}

fn isoperimetric() -> Outcome {
    let h = 1.0 / 256.0;
    let mut wulff = Vec::new();
    let mut ok = true;
    for (name, norm) in common::norms() {
        let r = domain_isoperimetric_ratio(&Domain::wulff(&norm, 1.0), &norm, h).map_err(|e| e.to_string())?;
        ok &= (r - 1.0).abs() <= 0.02;
        wulff.push(format!("{name} {r:.4}"));
    }
    let mut lowest = (f64::INFINITY, String::new());
    for (name, norm) in common::norms() {
        for (shape, domain) in common::shape_corpus() {
            let r = domain_isoperimetric_ratio(&domain, &norm, h).map_err(|e| e.to_string())?;
            if r < lowest.0 {
                lowest = (r, format!("{shape}/{name}"));
            }
        }
    }
    ok &= lowest.0 >= 0.98;
    check(ok, format!("Wulff balls: {}; corpus minimum {:.4} ({})", wulff.join(", "), lowest.0, lowest.1))
}

fn coarea() -> Outcome {
    let norm = euclid();
    let mut d = Vec::new();
    for h in [1.0 / 128.0, 1.0 / 256.0] {
        let grid = Grid::new(&Domain::disk(1.0), h).map_err(|e| e.to_string())?;
        let u = GridFunction::from_fn(&grid, |x| (1.0 - norm.polar_eval(x)).max(0.0));
        d.push(coarea_check(&u, &norm, (4.0 / h) as usize).map_err(|e| e.to_string())?.discrepancy);
    }
    let reduction = d[0] / d[1];
    check(
        d[1] < 0.03 && reduction >= 2.0,
        format!("discrepancy {:.2e} at h=1/128, {:.2e} at h=1/256, reduction {reduction:.2}x", d[0], d[1]),
    )
}

fn eigenvalue() -> Outcome {
    let norm = euclid();
    let h = 1.0 / 128.0;
    let lambda = |domain: Domain| -> Result<f64, String> {
        let grid = Grid::new(&domain, h).map_err(|e| e.to_string())?;
        Ok(first_eigenpair(&grid, &norm).map_err(|e| e.to_string())?.lambda1)
    };
    let bessel = 2.404_825_557_695_773_f64.powi(2);
    let disk = lambda(Domain::disk(1.0))?;
    let square = lambda(Domain::square(1.0))?;
    let large = lambda(Domain::disk(2.0))?;
    let e_disk = disk / bessel - 1.0;
    let e_square = square / (2.0 * PI * PI) - 1.0;
    let e_scale = 4.0 * large / disk - 1.0;
    check(
        e_disk.abs() < 0.01 && e_square.abs() < 0.01 && e_scale.abs() < 0.01,
        format!(
            "disk {disk:.5} ({:+.2}%), square {square:.4} ({:+.2}%), 4*lambda(2D)/lambda(D) - 1 = {:+.2}%",
            100.0 * e_disk,
            100.0 * e_square,
            100.0 * e_scale
        ),
    )
}

fn operator_mismatch(norm: &FinslerNorm) -> Result<f64, String> {
    let (kappa, lambda) = (norm.kappa().map_err(|e| e.to_string())?, norm.lambda_n().map_err(|e| e.to_string())?);
    let grid = Grid::new(&Domain::wulff(norm, 2.5), 1.0 / 64.0).map_err(|e| e.to_string())?;
    let w = GridFunction::from_fn(&grid, |x| bubble_profile(2.0, kappa, lambda, norm.polar_eval(x)));
    let q = EnergyOperator::new(&grid, norm, 0.0).and_then(|op| op.apply(&w)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for &i in grid.active() {
        if norm.polar_eval(&grid.mesh.coords(i)) <= 2.0 {
            let rhs = (2.0 * lambda * w.values[i]).exp();
            worst = worst.max((q.values[i] - rhs).abs() / rhs);
        }
    }
    Ok(worst)
}

fn bubble_checks() -> Outcome {
    let mut ok = true;
    let mut masses = Vec::new();
    for (name, norm) in [("n=2", euclid()), ("n=3", FinslerNorm::euclidean(3).unwrap()), ("diag41", diag41())] {
        let m = bubble_mass(&norm, 1e4).map_err(|e| e.to_string())?.total;
        ok &= (m - 1.0).abs() <= 1e-3;
        masses.push(format!("{name} {m:.6}"));
    }
    let radii = |k: usize| (0..=k).map(|i| 2.0 * i as f64 / k as f64).collect::<Vec<f64>>();
    let norm = euclid();
    let coarse = bubble(&norm, &radii(1000)).and_then(|w| bubble_residual(&w)).map_err(|e| e.to_string())?;
    let fine = bubble(&norm, &radii(2000)).and_then(|w| bubble_residual(&w)).map_err(|e| e.to_string())?;
    ok &= coarse < 1e-3 && coarse / fine >= 3.0;
    let grid_e = operator_mismatch(&euclid())?;
    let grid_q = operator_mismatch(&diag41())?;
    ok &= grid_e < 0.05 && grid_q < 0.05;
    check(
        ok,
        format!(
            "mass {}; radial residual {coarse:.2e} -> {fine:.2e} ({:.2}x); grid operator rel. error {grid_e:.1e} / {grid_q:.1e}",
            masses.join(", "),
            coarse / fine
        ),
    )
}

fn green_constant() -> Outcome {
    let grid = Grid::new(&Domain::disk(1.0), 1.0 / 256.0).map_err(|e| e.to_string())?;
    let fit = green_function(&grid, &euclid(), 0.0, &[0.0, 0.0]).map_err(|e| e.to_string())?;
    check(
        fit.c_g.abs() <= 0.02 && (fit.slope - 1.0).abs() <= 0.05,
        format!("C_G = {:+.4}, slope = {:.4}", fit.c_g, fit.slope),
    )
}

fn harmonic() -> Outcome {
    let rows = harmonic_identities(12).map_err(|e| e.to_string())?;
    let failing: Vec<usize> = rows.iter().filter(|r| !(r.a_holds() && r.b_holds())).map(|r| r.n).collect();
    check(failing.is_empty(), format!("{} rows exact for 2 <= n <= 12, failing {failing:?}", rows.len()))
}

fn subcritical() -> Outcome {
    let norm = euclid();
    let domain = Domain::disk(1.0);
    let grid = Grid::new(&domain, 1.0 / 64.0).map_err(|e| e.to_string())?;
    let ladder =
        subcritical_ladder(&grid, &norm, &[0.5, 0.2, 0.1], 0.0, &MtOptions::default()).map_err(|e| e.to_string())?;
    let area = domain.measure().map_err(|e| e.to_string())?;
    let row = &ladder[1].0;
    let r = &row.report;
    let js: Vec<f64> = ladder.iter().map(|(row, _)| row.j).collect();
    let nondecreasing = js.windows(2).all(|w| w[1] >= w[0]);
    check(
        r.constraint_residual < 1e-8 && r.el_residual_norm < 1e-4 && r.j_value > area && nondecreasing,
        format!(
            "at 0.2 lambda_n: constraint {:.1e}, EL {:.1e}, J {:.4} vs |D| {area:.4}; ladder J {js:.4?}",
            r.constraint_residual, r.el_residual_norm, r.j_value
        ),
    )
}

fn divergence() -> Outcome {
    let norm = euclid();
    let domain = Domain::disk(2.0);
    let grid = Grid::new(&domain, 1.0 / 32.0).map_err(|e| e.to_string())?;
    let eigen = first_eigenpair(&grid, &norm).map_err(|e| e.to_string())?;
    let eps = [1e-2, 1e-3, 1e-4];
    let run = |alpha: f64| {
        divergence_demo(&grid, &domain, &norm, &eigen, alpha, &eps, &[0.0, 0.0]).map_err(|e| e.to_string())
    };
    let critical = run(eigen.lambda1)?;
    let flat = run(0.0)?;
    let js = |t: &anisomt::blowup::DivergenceTable| t.rows.iter().map(|r| r.j).collect::<Vec<f64>>();
    let flat_js = js(&flat);
    let spread = flat_js.iter().cloned().fold(f64::MIN, f64::max) / flat_js.iter().cloned().fold(f64::MAX, f64::min);
    check(
        critical.ratio > 10.0 && spread < 2.0,
        format!(
            "alpha = lambda_1 = {:.4}: J {:.4?}, growth {:.2}x (needs > 10x), log-linear correlation {:.3}; alpha = 0: J {flat_js:.4?}, spread {spread:.3}x",
            eigen.lambda1,
            js(&critical),
            critical.ratio,
            critical.correlation
        ),
    )
}

fn glued() -> Outcome {
    let norm = euclid();
    let domain = Domain::disk(1.0);
    let grid = Grid::new(&domain, 1.0 / 256.0).map_err(|e| e.to_string())?;
    let green = green_function(&grid, &norm, 0.0, &[0.0, 0.0]).map_err(|e| e.to_string())?;
    let b = build_glued_bubble(&GluedParams { epsilon: 1e-3, alpha: 0.0 }, &grid, &domain, &norm, &green)
        .map_err(|e| e.to_string())?;
    let b_err = b.b / b.b_analytic - 1.0;
    check(
        b_err.abs() <= 0.10 && (0.95..=1.05).contains(&b.pre_energy) && b.relative_jump < 0.02,
        format!(
            "b = {:.5} vs {:.5} ({:+.2}%), pre-normalization energy {:.4}, interface jump {:.2}%",
            b.b,
            b.b_analytic,
            100.0 * b_err,
            b.pre_energy,
            100.0 * b.relative_jump
        ),
    )
}

const SUBCOMMANDS: [&str; 12] = [
    "norm-check",
    "kappa",
    "symmetrize",
    "isoperimetric",
    "eigen",
    "solve",
    "bubble",
    "green",
    "maximize",
    "moser",
    "glued",
    "identities",
];

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&path).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    let text = "h = 0.125\nnorm = { family = \"p_norm\", p = 3.0, weights = [1.0, 2.0] }\n\n[domain]\nshape = \"disk\"\nradius = 2.0\n\n[maximize]\nfractions = [0.5]\njitter = 0.05\n";
    std::fs::write(&config, text).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for sub in SUBCOMMANDS {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out = tmp.path().join(format!("{sub}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_anisomt"))
                .arg(sub)
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "11"])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{sub} exited with {}", status.status));
            }
            outputs.push(csv_files(&out)?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{sub}: CSV output differs between runs"));
        }
        compared += outputs[0].len();
    }
    check(compared > 0, format!("{compared} CSV files byte-identical across two seeded runs of {} subcommands", SUBCOMMANDS.len()))
}

fn criteria() -> Vec<Criterion> {
    let s = Duration::from_secs;
    vec![
        Criterion { id: 1, name: "sharp constant", budget: s(1), run: sharp_constant },
        Criterion { id: 2, name: "duality identities", budget: s(10), run: duality_suite },
        Criterion { id: 3, name: "isoperimetric ratio", budget: s(30), run: isoperimetric },
        Criterion { id: 4, name: "co-area", budget: s(30), run: coarea },
        Criterion { id: 5, name: "first eigenvalue", budget: s(300), run: eigenvalue },
        Criterion { id: 6, name: "bubble", budget: s(60), run: bubble_checks },
        Criterion { id: 7, name: "Green constant", budget: s(120), run: green_constant },
        Criterion { id: 8, name: "harmonic identities", budget: s(1), run: harmonic },
        Criterion { id: 9, name: "subcritical maximization", budget: s(600), run: subcritical },
        Criterion { id: 10, name: "divergence dichotomy", budget: s(300), run: divergence },
        Criterion { id: 11, name: "glued bubble", budget: s(300), run: glued },
        Criterion { id: 12, name: "determinism", budget: s(60), run: determinism },
    ]
}

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria().into_iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if elapsed > c.budget {
            pass = false;
            detail.push_str(&format!("; over budget of {} s", c.budget.as_secs()));
        }
        println!(
            "criterion {:>2} {:<26} {} ({:.1} s) {detail}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
