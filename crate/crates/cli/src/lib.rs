//! Experiment driver: one subcommand per numerical operation, configured from
//! a TOML file, writing CSV and JSON artifacts plus a checksummed manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub use config::ExperimentConfig;
use output::{Artifacts, Manifest, Versions, MANIFEST};

pub const DIAGNOSTIC: &str = "diagnostic.json";

#[derive(Debug, Parser)]
#[command(name = "anisomt", version, about = "Anisotropic Moser-Trudinger experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sampled check of the gauge duality identities.
    NormCheck,
    /// Unit Wulff ball measure and the sharp exponent.
    Kappa,
    /// Convex symmetrization of a random field.
    Symmetrize,
    /// Anisotropic isoperimetric ratio of the domain and of a Wulff ball.
    Isoperimetric,
    /// First eigenpair of the n-Finsler-Laplacian.
    Eigen,
    /// Dirichlet problem with a constant source.
    Solve,
    /// Radial bubble: residual and mass.
    Bubble,
    /// Green function and its regular-part constant.
    Green,
    /// Subcritical maximisers along the configured ladder.
    Maximize,
    /// Normalised Moser family along the epsilon ladder.
    Moser,
    /// Glued bubble family against the upper bound.
    Glued,
    /// Exact harmonic binomial identities.
    Identities {
        #[arg(long)]
        n_max: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::NormCheck => "norm-check",
            Command::Kappa => "kappa",
            Command::Symmetrize => "symmetrize",
            Command::Isoperimetric => "isoperimetric",
            Command::Eigen => "eigen",
            Command::Solve => "solve",
            Command::Bubble => "bubble",
            Command::Green => "green",
            Command::Maximize => "maximize",
            Command::Moser => "moser",
            Command::Glued => "glued",
            Command::Identities { .. } => "identities",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(anisomt::Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) | CliError::Check(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        use anisomt::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Check(_) => "check",
            CliError::Numerical(e) => match e {
                E::NonConvergence { .. } => "non_convergence",
                E::SignFlip(_) => "sign_flip",
                E::FitUnstable { .. } => "fit_unstable",
                E::ConstantsMismatch { .. } => "constants_mismatch",
                E::Saturation { .. } => "saturation",
                E::ZeroVector => "zero_vector",
                E::MeshMismatch => "mesh_mismatch",
                _ => "numerical",
            },
        }
    }

    fn details(&self) -> serde_json::Value {
        use anisomt::Error as E;
        use serde_json::json;
        match self {
            CliError::Numerical(E::NonConvergence { what, iterations, residual }) => {
                json!({ "what": what, "iterations": iterations, "residual": residual })
            }
            CliError::Numerical(E::SignFlip(k)) => json!({ "consecutive_flips": k }),
            CliError::Numerical(E::FitUnstable { residual, constant }) => {
                json!({ "residual": residual, "constant": constant })
            }
            CliError::Numerical(E::ConstantsMismatch { continuity, energy }) => {
                json!({ "continuity": continuity, "energy": energy })
            }
            CliError::Numerical(E::Saturation { cells }) => json!({ "cells": cells }),
            _ => serde_json::Value::Null,
        }
    }
}

impl From<anisomt::Error> for CliError {
    fn from(e: anisomt::Error) -> Self {
        use anisomt::Error as E;
        match e {
            E::InvalidInput(_)
            | E::InvalidNorm(_)
            | E::DegenerateNorm(_)
            | E::UnsupportedDimension(_)
            | E::Parse(_)
            | E::DomainTooSmall { .. } => CliError::Config(e.to_string()),
            E::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Numerical(e),
        }
    }
}

#[derive(Debug, Serialize)]
struct Diagnostic<'a> {
    subcommand: &'a str,
    exit_code: i32,
    kind: &'a str,
    message: String,
    details: serde_json::Value,
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("anisomt {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let name = cli.command.name();
    let loaded = match (&cli.config, &cli.command) {
        (Some(path), _) => ExperimentConfig::load(path).map(Some),
        (None, Command::Identities { .. }) => Ok(None),
        (None, _) => Err(CliError::Config(format!("`{name}` needs --config <path>"))),
    };
    let (cfg, load_error) = match loaded {
        Ok(cfg) => (cfg, None),
        // without an explicit --out there is nowhere sensible to report to
        Err(e) if cli.out.is_none() => return Err(e),
        Err(e) => (None, Some(e)),
    };
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("anisomt-out").join(name));
    let mut art = Artifacts::create(&dir)?;

    let result = match (load_error, &cli.command, &cfg) {
        (Some(e), _, _) => Err(e),
        (None, Command::Identities { n_max }, cfg) => {
            let n_max = n_max.or(cfg.as_ref().map(|c| c.identities.n_max)).unwrap_or(12);
            commands::identities(n_max, &mut art)
        }
        (None, command, Some(cfg)) => commands::dispatch(command, cfg, seed, &mut art),
        (None, _, None) => unreachable!("config presence checked above"),
    };

    if let Err(e) = &result {
        let diag = Diagnostic {
            subcommand: name,
            exit_code: e.exit_code(),
            kind: e.kind(),
            message: e.to_string(),
            details: e.details(),
        };
        art.json(DIAGNOSTIC, &diag)?;
    }
    let manifest = Manifest {
        subcommand: name,
        status: if result.is_ok() { "ok" } else { "failed" },
        seed,
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Io(e.to_string()))?,
        versions: Versions::current(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts: art.entries(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    let path = art.dir().join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommand_names_match_clap() {
        for name in [
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
        ] {
            let cli = Cli::try_parse_from(["anisomt", name, "--config", "c.toml"]).unwrap();
            assert_eq!(cli.command.name(), name);
        }
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["anisomt", "identities", "--n-max", "7", "--out", "o", "--seed", "3"]).unwrap();
        assert_eq!(cli.command, Command::Identities { n_max: Some(7) });
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.out, Some(PathBuf::from("o")));
    }

    #[test]
    fn error_classes() {
        let cfg: CliError = anisomt::Error::InvalidInput("x".into()).into();
        assert_eq!(cfg.exit_code(), 1);
        let num: CliError = anisomt::Error::NonConvergence { what: "solve", iterations: 3, residual: 1.0 }.into();
        assert_eq!(num.exit_code(), 2);
        assert_eq!(num.kind(), "non_convergence");
        assert_eq!(num.details()["iterations"], 3);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with(["anisomt", "no-such-command"]), 1);
        assert_eq!(main_with(["anisomt", "kappa"]), 1);
    }

    struct Run {
        dir: tempfile::TempDir,
    }

    impl Run {
        fn new(config: &str) -> Self {
            let dir = tempfile::tempdir().unwrap();
            std::fs::write(dir.path().join("run.toml"), config).unwrap();
            Run { dir }
        }

        fn exec(&self, sub: &str, out: &str, extra: &[&str]) -> i32 {
            let cfg = self.dir.path().join("run.toml");
            let out = self.dir.path().join(out);
            let mut args: Vec<OsString> = vec!["anisomt".into(), sub.into(), "--config".into(), cfg.into()];
            args.extend(["--out".into(), out.into()]);
            args.extend(extra.iter().map(OsString::from));
            main_with(args)
        }

        fn read(&self, out: &str, file: &str) -> Vec<u8> {
            std::fs::read(self.dir.path().join(out).join(file)).unwrap()
        }

        fn json(&self, out: &str, file: &str) -> serde_json::Value {
            serde_json::from_slice(&self.read(out, file)).unwrap()
        }
    }

    const DISK: &str = "h = 0.125\nnorm = { family = \"euclidean\" }\n\n[domain]\nshape = \"disk\"\n";

    #[test]
    fn kappa_reports_the_sharp_constant() {
        let run = Run::new(DISK);
        assert_eq!(run.exec("kappa", "k", &[]), 0);
        let out = run.json("k", "kappa.json");
        assert!((out["kappa"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-12);
        assert!((out["lambda_n"].as_f64().unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-10);
        assert_eq!(out["dim"], 2);
    }

    #[test]
    fn manifest_lists_every_artifact_with_its_checksum() {
        let run = Run::new(DISK);
        assert_eq!(run.exec("symmetrize", "s", &["--seed", "5"]), 0);
        let manifest = run.json("s", output::MANIFEST);
        assert_eq!(manifest["subcommand"], "symmetrize");
        assert_eq!(manifest["status"], "ok");
        assert_eq!(manifest["seed"], 5);
        assert_eq!(manifest["config"]["domain"]["shape"], "disk");
        assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
        let listed: Vec<&serde_json::Value> = manifest["artifacts"].as_array().unwrap().iter().collect();
        let mut on_disk: Vec<String> = std::fs::read_dir(run.dir.path().join("s"))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|f| f != output::MANIFEST)
            .collect();
        on_disk.sort();
        let mut names: Vec<String> = listed.iter().map(|a| a["file"].as_str().unwrap().to_owned()).collect();
        names.sort();
        assert_eq!(names, on_disk);
        for a in listed {
            let bytes = run.read("s", a["file"].as_str().unwrap());
            assert_eq!(a["sha256"].as_str().unwrap(), output::sha256_hex(&bytes));
            assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
        }
    }

    #[test]
    fn seeded_runs_repeat_and_seeds_matter() {
        let run = Run::new(DISK);
        for (out, seed) in [("a", "9"), ("b", "9"), ("c", "10")] {
            assert_eq!(run.exec("symmetrize", out, &["--seed", seed]), 0);
        }
        for file in ["input.csv", "symmetrized.csv", "rearrangement.csv"] {
            assert_eq!(run.read("a", file), run.read("b", file), "{file}");
        }
        assert_ne!(run.read("a", "input.csv"), run.read("c", "input.csv"));
    }

    #[test]
    fn seed_falls_back_to_the_config() {
        let run = Run::new(&format!("seed = 21\n{DISK}"));
        assert_eq!(run.exec("norm-check", "n", &[]), 0);
        assert_eq!(run.json("n", output::MANIFEST)["seed"], 21);
        assert_eq!(run.exec("norm-check", "m", &["--seed", "4"]), 0);
        assert_eq!(run.json("m", output::MANIFEST)["seed"], 4);
    }

    #[test]
    fn identities_run_without_a_config() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("id");
        let code = main_with([OsString::from("anisomt"), "identities".into(), "--out".into(), out.clone().into()]);
        assert_eq!(code, 0);
        let csv = std::fs::read_to_string(out.join("identities.csv")).unwrap();
        assert_eq!(csv.lines().count(), 12);
        assert!(csv.lines().nth(1).unwrap().starts_with("2,"));
    }

    #[test]
    fn bad_configs_exit_one_with_a_diagnostic() {
        for (text, needle) in [
            ("norm = { family = \"euclidean\" }\nbogus = 1\n", "bogus"),
            ("h = -1.0\nnorm = { family = \"euclidean\" }\n", "h"),
            ("norm = { family = \"p_norm\", p = 0.5, weights = [1.0, 1.0] }\n", "p"),
        ] {
            let run = Run::new(text);
            assert_eq!(run.exec("kappa", "x", &[]), 1, "{text}");
            let diag = run.json("x", DIAGNOSTIC);
            assert_eq!(diag["exit_code"], 1);
            assert_eq!(diag["kind"], "config");
            assert!(diag["message"].as_str().unwrap().contains(needle), "{diag}");
            assert_eq!(run.json("x", output::MANIFEST)["status"], "failed");
        }
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("absent.toml");
        let out = dir.path().join("o");
        let args = [OsString::from("anisomt"), "kappa".into(), "--config".into(), missing.into(), "--out".into(), out.into()];
        assert_eq!(main_with(args), 1);
    }

    #[test]
    fn numerical_failure_exits_two() {
        let run = Run::new(&format!("{DISK}\n[eigen]\nmax_iter = 1\ntol = 1e-15\n"));
        assert_eq!(run.exec("eigen", "e", &[]), 2);
        let diag = run.json("e", DIAGNOSTIC);
        assert_eq!(diag["exit_code"], 2);
        assert_ne!(diag["kind"], "config");
    }
}
