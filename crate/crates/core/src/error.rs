use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric traceless (asymmetry {asym:.3e}, trace {trace:.3e})")]
    NotInS0 { asym: f64, trace: f64 },

    #[error("invalid material parameters: {0}")]
    InvalidParams(String),

    #[error("eigenvalue gap {gap:.3e} below tolerance {tol:.3e}; vacuum projection undefined")]
    DegenerateTensor { gap: f64, tol: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("region is not contained in the grid interior")]
    RegionOutOfDomain,

    #[error("cutoff support B(x, {radius:.4}) leaves the grid interior")]
    SupportExceedsDomain { radius: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("energy became non-finite at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    #[error("good-radius interval too narrow: eps^(1/8) = {upper:.4} < 4h = {min:.4}")]
    IntervalTooNarrow { upper: f64, min: f64 },

    #[error("bounded-energy hypothesis violated: E(B_4r)/r = {scaled_energy:.4} > {bound:.4}")]
    HypothesisViolated { scaled_energy: f64, bound: f64 },

    #[error("loop passes through a defect core at sample {sample}")]
    LoopThroughCore { sample: usize },

    #[error("loop is undersampled at sample {sample} (|n_i . n_i+1| = {dot:.3})")]
    LoopUndersampled { sample: usize, dot: f64 },

    #[error("invalid loop: {0}")]
    InvalidLoop(String),

    #[error("at least {needed} records are required, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("invalid QF1 file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
