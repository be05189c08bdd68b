use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid bath: {0}")]
    InvalidBath(String),

    #[error("hierarchy too large: {count} operators exceeds the cap of {cap}")]
    HierarchyTooLarge { count: u128, cap: usize },

    #[error("invalid initial state: {0}")]
    InvalidState(String),

    #[error(
        "time step {dt_fs} fs violates the stability bound: dt * (max_tier * gamma + omega_e) = {product:.4} > {limit}"
    )]
    UnstableStep { dt_fs: f64, product: f64, limit: f64 },

    #[error("integration failed at t = {time_fs} fs: {reason}")]
    IntegrationFailure { time_fs: f64, reason: String },

    #[error("representation mismatch: expected {expected:?}, found {found:?}")]
    RepresentationMismatch {
        expected: crate::propagator::Representation,
        found: crate::propagator::Representation,
    },

    #[error("cannot convert representation: |c0| = 0 while auxiliary operators are nonzero")]
    UndefinedConversion,

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("trajectory carries no auxiliary-operator snapshots")]
    MissingSnapshots,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than in the
    /// user's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. } | Error::NotHermitian(_) | Error::UndefinedConversion
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
