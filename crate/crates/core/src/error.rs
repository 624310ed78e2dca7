use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("forward speed must be positive for slip geometry (u = {0})")]
    NonPositiveSpeed(f64),

    #[error("non-finite plant state")]
    NonFiniteState,

    #[error("plant diverged at t = {t:.3} s ({what})")]
    Divergence { t: f64, what: String },

    #[error("no steady-turn trim at delta_SW = {delta_deg:.1} deg: {reason}")]
    TrimNotFound { delta_deg: f64, reason: String },

    #[error("matrix is not Schur (spectral radius {0:.6})")]
    NotSchur(f64),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("admissible set is already disturbance-augmented")]
    AlreadyAugmented,

    #[error("{0}")]
    InvalidInput(String),

    #[error("quadratic program infeasible")]
    QpInfeasible,

    #[error("quadratic program hit the iteration cap ({0})")]
    QpIterationLimit(usize),

    #[error("conservatism undefined for an all-zero reference trace")]
    ZeroReference,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}
