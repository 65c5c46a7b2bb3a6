//! Experiment configuration, read from TOML. The schema is described in
//! `docs/config.md`.

use std::path::{Path, PathBuf};

use anisomt::{Domain, FinslerNorm, NormSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub norm: NormSpec,
    #[serde(default)]
    pub domain: DomainConfig,
    /// Mesh spacing.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub norm_check: NormCheckConfig,
    #[serde(default)]
    pub symmetrize: SymmetrizeConfig,
    #[serde(default)]
    pub isoperimetric: IsoperimetricConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub bubble: BubbleConfig,
    #[serde(default)]
    pub green: GreenConfig,
    #[serde(default)]
    pub maximize: MaximizeConfig,
    #[serde(default)]
    pub moser: MoserConfig,
    #[serde(default)]
    pub glued: GluedConfig,
    #[serde(default)]
    pub identities: IdentitiesConfig,
}

fn default_h() -> f64 {
    1.0 / 64.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Ball,
    Square,
    Box,
    Polygon,
    Wulff,
}

/// Shape parameters; only the ones relevant to `shape` are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: Shape,
    pub radius: Option<f64>,
    pub side: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub vertices: Option<Vec<[f64; 2]>>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Disk,
            radius: None,
            side: None,
            center: None,
            lo: None,
            hi: None,
            vertices: None,
            scale: 1.0,
        }
    }
}

impl DomainConfig {
    pub fn build(&self, norm: &FinslerNorm) -> Result<Domain, CliError> {
        let n = norm.dim();
        let radius = self.radius.unwrap_or(1.0);
        let center = || self.center.clone().unwrap_or_else(|| vec![0.0; n]);
        let need = |field: &str| CliError::Config(format!("domain shape {:?} needs `{field}`", self.shape));
        let domain = match self.shape {
            Shape::Disk if n != 2 => return Err(CliError::Config("disk domains need a 2D norm".into())),
            Shape::Disk | Shape::Ball => Domain::Ball { center: center(), radius },
            Shape::Square => Domain::square(self.side.unwrap_or(1.0)),
            Shape::Box => Domain::Box {
                lo: self.lo.clone().ok_or_else(|| need("lo"))?,
                hi: self.hi.clone().ok_or_else(|| need("hi"))?,
            },
            Shape::Polygon => Domain::Polygon { vertices: self.vertices.clone().ok_or_else(|| need("vertices"))? },
            Shape::Wulff => Domain::Wulff { norm: norm.clone(), center: center(), radius },
        };
        if !(self.scale > 0.0) {
            return Err(CliError::Config(format!("domain scale must be positive, got {}", self.scale)));
        }
        let domain = if self.scale == 1.0 { domain } else { domain.scaled(self.scale) };
        domain.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if domain.dim() != n {
            return Err(CliError::Config(format!("domain is {}D but the norm is {n}D", domain.dim())));
        }
        Ok(domain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormCheckConfig {
    pub samples: usize,
}

impl Default for NormCheckConfig {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymmetrizeConfig {
    /// Number of random Gaussian bumps in the input field.
    pub bumps: usize,
    /// Bump width relative to the domain diameter.
    pub width: f64,
    /// Levels for the co-area check of the symmetrized field.
    pub levels: usize,
}

impl Default for SymmetrizeConfig {
    fn default() -> Self {
        Self { bumps: 4, width: 0.15, levels: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsoperimetricConfig {
    /// Radius of the Wulff ball used as the reference shape.
    pub wulff_radius: f64,
}

impl Default for IsoperimetricConfig {
    fn default() -> Self {
        Self { wulff_radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// Constant right-hand side.
    pub source: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { source: 1.0, tol: 1e-9, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BubbleConfig {
    /// Wulff radius for the mass integral.
    pub r_max: f64,
    /// Outer radius of the tabulated profile.
    pub r_out: f64,
    /// Intervals in the tabulated profile; the residual is also taken at twice this.
    pub intervals: usize,
}

impl Default for BubbleConfig {
    fn default() -> Self {
        Self { r_max: 1e4, r_out: 2.0, intervals: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenConfig {
    pub alpha: f64,
    /// Pole; the origin when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self { alpha: 0.0, x0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaximizeConfig {
    /// `ε_sub` as fractions of `λ_n`, strictly decreasing.
    pub fractions: Vec<f64>,
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub stall_tol: f64,
    pub jitter: f64,
}

impl Default for MaximizeConfig {
    fn default() -> Self {
        Self { fractions: vec![0.5, 0.2, 0.1], alpha: 0.0, max_iter: 2000, tol: 1e-8, stall_tol: 1e-5, jitter: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoserConfig {
    /// Perturbation strength; the computed `λ₁` when absent.
    pub alpha: Option<f64>,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub x0: Option<Vec<f64>>,
    /// `t_ε = (log 1/ε)^{−e}`; `e = (2n+1)/(2n(n+1))` when absent.
    pub t_exponent: Option<f64>,
}

impl Default for MoserConfig {
    fn default() -> Self {
        Self { alpha: None, epsilons: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6], x0: None, t_exponent: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GluedConfig {
    pub alpha: f64,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub x0: Option<Vec<f64>>,
}

impl Default for GluedConfig {
    fn default() -> Self {
        Self { alpha: 0.0, epsilons: vec![1e-1, 3e-2, 1e-2], x0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    pub n_max: usize,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self { n_max: 12 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.h > 0.0) || !self.h.is_finite() {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if !strictly_decreasing(&self.maximize.fractions) {
            return bad("maximize.fractions must be nonempty and strictly decreasing".into());
        }
        if self.maximize.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return bad("maximize.fractions must lie in (0, 1)".into());
        }
        for (name, ladder) in [("moser", &self.moser.epsilons), ("glued", &self.glued.epsilons)] {
            if !strictly_decreasing(ladder) || ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                return bad(format!("{name}.epsilons must be strictly decreasing values in (0, 1)"));
            }
        }
        if let Some(e) = self.moser.t_exponent {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("moser.t_exponent must be positive, got {e}"));
            }
        }
        if self.norm_check.samples == 0 {
            return bad("norm_check.samples must be positive".into());
        }
        if self.symmetrize.bumps == 0 || !(self.symmetrize.width > 0.0) || self.symmetrize.levels == 0 {
            return bad("symmetrize needs bumps ≥ 1, width > 0 and levels ≥ 1".into());
        }
        if !(self.bubble.r_max > 0.0) || !(self.bubble.r_out > 0.0) || self.bubble.intervals < 2 {
            return bad("bubble needs r_max > 0, r_out > 0 and intervals ≥ 2".into());
        }
        if !(self.isoperimetric.wulff_radius > 0.0) {
            return bad("isoperimetric.wulff_radius must be positive".into());
        }
        Ok(())
    }

    pub fn norm(&self) -> Result<FinslerNorm, CliError> {
        FinslerNorm::from_spec(&self.norm).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    !v.is_empty() && v.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse("norm = { family = \"euclidean\" }").unwrap();
        assert_eq!(cfg.h, 1.0 / 64.0);
        assert_eq!(cfg.domain.shape, Shape::Disk);
        assert_eq!(cfg.maximize.fractions, vec![0.5, 0.2, 0.1]);
        let norm = cfg.norm().unwrap();
        assert!(matches!(cfg.domain.build(&norm).unwrap(), Domain::Ball { radius, .. } if radius == 1.0));
    }

    #[test]
    fn full_tables_parse() {
        let text = r#"
            h = 0.03125
            seed = 9
            out = "runs/a"
            norm = { family = "p_norm", p = 1.5, weights = [1, 2] }

            [domain]
            shape = "polygon"
            vertices = [[0, 0], [1, 0], [0.5, 1]]
            scale = 2.0

            [moser]
            alpha = 1.0
            epsilons = [1e-2, 1e-4]
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.moser.alpha, Some(1.0));
        let domain = cfg.domain.build(&cfg.norm().unwrap()).unwrap();
        assert!((domain.measure().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "norm = { family = \"euclidean\" }\nh = -1",
            "norm = { family = \"euclidean\" }\n[maximize]\nfractions = [0.1, 0.2]",
            "norm = { family = \"euclidean\" }\n[glued]\nepsilons = [0.1, 0.1]",
            "norm = { family = \"euclidean\" }\nunknown = 3",
            "norm = { family = \"cubic\" }",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn domain_dimension_must_match_norm() {
        let cfg = ExperimentConfig::parse("norm = { family = \"euclidean\", dim = 3 }\n[domain]\nshape = \"square\"")
            .unwrap();
        assert!(cfg.domain.build(&cfg.norm().unwrap()).is_err());
    }
}
