use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("raster {path}: {msg}")]
    Raster { path: PathBuf, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rhs violates the solvability condition (mean {mean:e} over the active domain)")]
    Incompatible { mean: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("corrector mismatch: {0}")]
    CorrectorMismatch(String),

    #[error("missing corrector for direction {0}")]
    MissingDirection(usize),

    #[error("negative concentration {value:e} at node {node}")]
    NegativeConcentration { node: usize, value: f64 },

    #[error("salt depleted at node {node} (c = {value:e})")]
    Depletion { node: usize, value: f64 },

    #[error("time step {dt:e} exceeds the semi-implicit bound {bound:e}; select implicit mode")]
    StepBound { dt: f64, bound: f64 },

    #[error("steady solve stagnated after {iterations} iterations (last residual {residual:e})")]
    Stagnation {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("tensor is not diagonal in the grid axes (entry ({row},{col}) = {value:e})")]
    NonDiagonalTensor { row: usize, col: usize, value: f64 },

    #[error("domain too large: {voxels} voxels exceeds cap {cap}")]
    TooLarge { voxels: usize, cap: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status for the command-line front end: 2 for bad input,
    /// 4 when the physics leaves the model's regime, 3 for other failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(_)
            | Error::UnknownPreset(_)
            | Error::Raster { .. }
            | Error::InvalidArgument(_)
            | Error::TooLarge { .. }
            | Error::Config(_)
            | Error::Json(_) => 2,
            Error::Depletion { .. } | Error::NegativeConcentration { .. } => 4,
            _ => 3,
        }
    }
}
