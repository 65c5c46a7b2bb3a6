use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use anisomt::blowup::{
    bound_sandwich, default_t_eps, divergence_demo_with, harmonic_identities, identity_report, write_family_csv,
};
use anisomt::mt::{subcritical_ladder, write_ladder_csv, MtOptions};
use anisomt::pde::{
    bubble, bubble_mass, bubble_residual, dirichlet_energy, dirichlet_solve_from, first_eigenpair,
    first_eigenpair_with, green_function, CsvTelemetry, EigenOptions, SolverOptions,
};
use anisomt::symmetrization::{coarea_check, convex_symmetrize, decreasing_rearrangement, domain_isoperimetric_ratio};
use anisomt::{Domain, FinslerNorm, Grid, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::Artifacts;
use crate::{CliError, Command};

type Res = Result<(), CliError>;

pub(crate) fn dispatch(command: &Command, cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Res {
    match command {
        Command::NormCheck => norm_check(cfg, seed, art),
        Command::Kappa => kappa(cfg, art),
        Command::Symmetrize => symmetrize(cfg, seed, art),
        Command::Isoperimetric => isoperimetric(cfg, art),
        Command::Eigen => eigen(cfg, art),
        Command::Solve => solve(cfg, art),
        Command::Bubble => bubble_cmd(cfg, art),
        Command::Green => green(cfg, art),
        Command::Maximize => maximize(cfg, seed, art),
        Command::Moser => moser(cfg, art),
        Command::Glued => glued(cfg, art),
        Command::Identities { .. } => identities(cfg.identities.n_max, art),
    }
}

struct Setup {
    norm: FinslerNorm,
    domain: Domain,
    grid: Arc<Grid>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let norm = cfg.norm()?;
    let domain = cfg.domain.build(&norm)?;
    let grid = Grid::new(&domain, cfg.h)?;
    Ok(Setup { norm, domain, grid })
}

fn pole(x0: &Option<Vec<f64>>, dim: usize) -> Result<Vec<f64>, CliError> {
    match x0 {
        Some(x) if x.len() != dim => Err(CliError::Config(format!("x0 has {} coordinates, expected {dim}", x.len()))),
        Some(x) => Ok(x.clone()),
        None => Ok(vec![0.0; dim]),
    }
}

/// Writes a grid function as CSV when it is planar.
fn field(art: &mut Artifacts, name: &str, u: &GridFunction) -> Res {
    if u.mesh().dim() == 2 {
        art.with(name, |w| u.write_csv(w))?;
    }
    Ok(())
}

fn announce<T: Serialize>(value: &T) {
    if let Ok(text) = serde_json::to_string(value) {
        println!("{text}");
    }
}

fn norm_check(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Res {
    let norm = cfg.norm()?;
    let report = norm.duality_check(cfg.norm_check.samples, seed);
    art.with("duality.csv", |w| {
        writeln!(w, "identity,max_violation")?;
        for (name, v) in report.items() {
            writeln!(w, "{name},{v:.16e}")?;
        }
        Ok(())
    })?;
    let out = json!({ "norm": cfg.norm, "max_violation": report.max_violation(), "report": report });
    art.json("duality.json", &out)?;
    announce(&json!({ "max_violation": report.max_violation() }));
    Ok(())
}

#[derive(Serialize)]
struct KappaOut {
    kappa: f64,
    lambda_n: f64,
    dim: usize,
}

fn kappa(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let norm = cfg.norm()?;
    let out = KappaOut { kappa: norm.kappa()?, lambda_n: norm.lambda_n()?, dim: norm.dim() };
    art.json("kappa.json", &out)?;
    announce(&out);
    Ok(())
}

#[derive(Serialize)]
struct SymmetrizeOut {
    lp_norm_input: f64,
    lp_norm_symmetrized: f64,
    max_input: f64,
    max_symmetrized: f64,
    energy_input: f64,
    energy_symmetrized: f64,
    /// Symmetrized energy over input energy; at most one up to discretisation.
    energy_ratio: f64,
    coarea_discrepancy: Option<f64>,
}

fn symmetrize(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Res {
    let Setup { norm, domain, grid } = setup(cfg)?;
    let n = norm.dim();
    let (lo, hi) = domain.bbox();
    let diameter = lo.iter().zip(&hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
    let width = cfg.symmetrize.width * diameter;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bumps = Vec::with_capacity(cfg.symmetrize.bumps);
    for _ in 0..10_000 * cfg.symmetrize.bumps {
        if bumps.len() == cfg.symmetrize.bumps {
            break;
        }
        let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if domain.contains(&c) {
            bumps.push((c, rng.gen_range(0.5..1.5)));
        }
    }
    if bumps.is_empty() {
        return Err(CliError::Config("could not place any bump inside the domain".into()));
    }
    let u = GridFunction::from_fn(&grid, |x| {
        let s: f64 = bumps
            .iter()
            .map(|(c, a)| {
                let d2: f64 = x.iter().zip(c).map(|(p, q)| (p - q).powi(2)).sum();
                a * (-d2 / (2.0 * width * width)).exp()
            })
            .sum();
        domain.level(x).max(0.0) * s
    });
    let star = convex_symmetrize(&u, &norm)?;
    let energy_input = dirichlet_energy(&u, &norm)?;
    let energy_symmetrized = dirichlet_energy(&star, &norm)?;
    let coarea_discrepancy = if n == 2 { Some(coarea_check(&star, &norm, cfg.symmetrize.levels)?.discrepancy) } else { None };
    let out = SymmetrizeOut {
        lp_norm_input: u.lp_norm(n as f64),
        lp_norm_symmetrized: star.lp_norm(n as f64),
        max_input: u.max_abs(),
        max_symmetrized: star.max_abs(),
        energy_input,
        energy_symmetrized,
        energy_ratio: energy_symmetrized / energy_input,
        coarea_discrepancy,
    };
    let rearr = decreasing_rearrangement(&u);
    art.with("rearrangement.csv", |w| {
        writeln!(w, "measure,value")?;
        let total = rearr.support();
        for k in 0..=256 {
            let t = total * k as f64 / 256.0;
            writeln!(w, "{t:.16e},{:.16e}", rearr.eval(t))?;
        }
        Ok(())
    })?;
    field(art, "input.csv", &u)?;
    field(art, "symmetrized.csv", &star)?;
    art.json("symmetrize.json", &out)?;
    announce(&out);
    Ok(())
}

fn isoperimetric(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let norm = cfg.norm()?;
    let domain = cfg.domain.build(&norm)?;
    let radius = cfg.isoperimetric.wulff_radius;
    let domain_ratio = domain_isoperimetric_ratio(&domain, &norm, cfg.h)?;
    let wulff_ratio = domain_isoperimetric_ratio(&Domain::wulff(&norm, radius), &norm, cfg.h)?;
    art.with("isoperimetric.csv", |w| {
        writeln!(w, "shape,ratio")?;
        writeln!(w, "domain,{domain_ratio:.16e}")?;
        writeln!(w, "wulff,{wulff_ratio:.16e}")?;
        Ok(())
    })?;
    let out = json!({ "domain_ratio": domain_ratio, "wulff_ratio": wulff_ratio, "wulff_radius": radius, "h": cfg.h });
    art.json("isoperimetric.json", &out)?;
    announce(&out);
    Ok(())
}

#[derive(Serialize)]
struct EigenOut {
    lambda1: f64,
    iterations: usize,
    h: f64,
    active_nodes: usize,
}

fn eigen(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let Setup { norm, grid, .. } = setup(cfg)?;
    let opts = EigenOptions { tol: cfg.eigen.tol, max_iter: cfg.eigen.max_iter, ..EigenOptions::default() };
    let pair = first_eigenpair_with(&grid, &norm, &opts)?;
    let out = EigenOut { lambda1: pair.lambda1, iterations: pair.iterations, h: cfg.h, active_nodes: grid.active().len() };
    field(art, "eigenfunction.csv", &pair.eigenfunction)?;
    art.json("eigen.json", &out)?;
    announce(&out);
    Ok(())
}

fn solve(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let Setup { norm, grid, .. } = setup(cfg)?;
    let f = GridFunction::from_fn(&grid, |_| cfg.solve.source);
    let opts = SolverOptions { tol: cfg.solve.tol, max_iter: cfg.solve.max_iter, ..SolverOptions::default() };
    let mut sink = CsvTelemetry::new(Vec::new());
    let (u, stats) = dirichlet_solve_from(&f, &norm, None, &opts, Some(&mut sink))?;
    if let Some(e) = sink.error.take() {
        return Err(CliError::Io(e.to_string()));
    }
    art.write("telemetry.csv", &sink.into_inner())?;
    field(art, "solution.csv", &u)?;
    let out = json!({
        "iterations": stats.iterations,
        "energy": stats.energy,
        "residual": stats.residual,
        "max_value": u.max_abs(),
        "h": cfg.h,
    });
    art.json("solve.json", &out)?;
    announce(&out);
    Ok(())
}

fn bubble_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let norm = cfg.norm()?;
    let b = &cfg.bubble;
    let radii = |k: usize| (0..=k).map(|i| b.r_out * i as f64 / k as f64).collect::<Vec<f64>>();
    let coarse = bubble(&norm, &radii(b.intervals))?;
    let residual = bubble_residual(&coarse)?;
    let residual_refined = bubble_residual(&bubble(&norm, &radii(2 * b.intervals))?)?;
    let mass = bubble_mass(&norm, b.r_max)?;
    art.with("bubble.csv", |w| {
        writeln!(w, "r,w")?;
        for (r, v) in coarse.radii.iter().zip(&coarse.values) {
            writeln!(w, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    })?;
    let out = json!({
        "mass": mass,
        "residual": residual,
        "residual_refined": residual_refined,
        "reduction": residual / residual_refined,
        "r_max": b.r_max,
    });
    art.json("bubble.json", &out)?;
    announce(&out);
    Ok(())
}

fn green(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let Setup { norm, grid, .. } = setup(cfg)?;
    let x0 = pole(&cfg.green.x0, norm.dim())?;
    let fit = green_function(&grid, &norm, cfg.green.alpha, &x0)?;
    field(art, "green.csv", &fit.green)?;
    let out = json!({ "alpha": cfg.green.alpha, "x0": x0, "h": cfg.h, "fit": fit.summary() });
    art.json("green.json", &out)?;
    announce(&fit.summary());
    Ok(())
}

fn maximize(cfg: &ExperimentConfig, seed: u64, art: &mut Artifacts) -> Res {
    let Setup { norm, grid, .. } = setup(cfg)?;
    let m = &cfg.maximize;
    let opts = MtOptions {
        max_iter: m.max_iter,
        tol: m.tol,
        stall_tol: m.stall_tol,
        jitter: m.jitter,
        seed,
        ..MtOptions::default()
    };
    let ladder = subcritical_ladder(&grid, &norm, &m.fractions, m.alpha, &opts)?;
    let rows: Vec<_> = ladder.iter().map(|(r, _)| r.clone()).collect();
    art.with("ladder.csv", |w| write_ladder_csv(&rows, w))?;
    if let Some((_, u)) = ladder.last() {
        field(art, "maximizer.csv", u)?;
    }
    let nondecreasing = rows.windows(2).all(|w| w[1].j >= w[0].j);
    art.json("maximize.json", &json!({ "alpha": m.alpha, "j_nondecreasing": nondecreasing, "rows": rows }))?;
    let summary: Vec<_> = rows.iter().map(|r| json!({ "epsilon_sub": r.epsilon_sub, "J": r.j })).collect();
    announce(&summary);
    Ok(())
}

fn moser(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let Setup { norm, domain, grid } = setup(cfg)?;
    let x0 = pole(&cfg.moser.x0, norm.dim())?;
    let pair = first_eigenpair(&grid, &norm)?;
    let alpha = cfg.moser.alpha.unwrap_or(pair.lambda1);
    let n = norm.dim();
    let t_eps = |eps: f64| match cfg.moser.t_exponent {
        Some(e) => (1.0 / eps).ln().powf(-e),
        None => default_t_eps(n, eps),
    };
    let table = divergence_demo_with(&grid, &domain, &norm, &pair, alpha, &cfg.moser.epsilons, &x0, t_eps)?;
    art.with("moser.csv", |w| write_family_csv(&table.family_rows(), w))?;
    art.json("moser.json", &json!({ "lambda1": pair.lambda1, "table": table }))?;
    announce(&json!({ "alpha": alpha, "ratio": table.ratio, "correlation": table.correlation }));
    Ok(())
}

fn glued(cfg: &ExperimentConfig, art: &mut Artifacts) -> Res {
    let Setup { norm, domain, grid } = setup(cfg)?;
    let x0 = pole(&cfg.glued.x0, norm.dim())?;
    let fit = green_function(&grid, &norm, cfg.glued.alpha, &x0)?;
    let report = bound_sandwich(&grid, &domain, &norm, cfg.glued.alpha, &cfg.glued.epsilons, &fit)?;
    art.with("glued.csv", |w| write_family_csv(&report.family_rows(), w))?;
    art.json("glued.json", &json!({ "green": fit.summary(), "sandwich": report }))?;
    announce(&json!({ "bound": report.bound, "max_j": report.max_j, "ratio": report.ratio }));
    Ok(())
}

pub(crate) fn identities(n_max: usize, art: &mut Artifacts) -> Res {
    let rows = harmonic_identities(n_max)?;
    let report = identity_report(&rows);
    art.write("identities.txt", report.as_bytes())?;
    let mut csv = String::from("n,sum_a,harmonic,sum_b,reciprocal\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.n, r.sum_a, r.harmonic, r.sum_b, r.reciprocal);
    }
    art.write("identities.csv", csv.as_bytes())?;
    print!("{report}");
    match rows.iter().find(|r| !(r.a_holds() && r.b_holds())) {
        Some(r) => Err(CliError::Check(format!("identities fail at n = {}", r.n))),
        None => Ok(()),
    }
}
