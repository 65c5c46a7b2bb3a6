use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation undefined at the zero vector")]
    ZeroVector,

    #[error("unsupported dimension {0} (supported: 2 and 3)")]
    UnsupportedDimension(usize),

    #[error("invalid norm definition: {0}")]
    InvalidNorm(String),

    #[error("norm family is degenerate for PDE solves: {0}")]
    DegenerateNorm(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid functions live on different meshes")]
    MeshMismatch,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eigen iterate lost positivity {0} times in a row")]
    SignFlip(usize),

    #[error("Green constant fit unstable: residual {residual:.3e} vs constant {constant:.3e}")]
    FitUnstable { residual: f64, constant: f64 },

    #[error("Wulff ball of radius {radius} does not fit inside the domain")]
    DomainTooSmall { radius: f64 },

    #[error("normalisation constants disagree: C from continuity {continuity:.6}, C from energy {energy:.6}")]
    ConstantsMismatch { continuity: f64, energy: f64 },

    #[error("exponent saturated in {cells} cells; subcritical gap too small for this mesh")]
    Saturation { cells: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
