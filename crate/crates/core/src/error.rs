use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state {state:?} is outside the domain of {system}")]
    OutOfDomain { system: String, state: Vec<f64> },

    #[error("integration failed at step {step}: non-finite stage from state {state:?}")]
    IntegrationFailure { step: usize, state: Vec<f64> },

    #[error("trajectory left the bounding box at step {step}: {state:?}")]
    LeftBoundingBox { step: usize, state: Vec<f64> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("insufficient data: need {needed} distinct candidates, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("lifted data has numerical rank zero")]
    RankZero,

    #[error("horizon {horizon} exceeds trajectory of {len} states")]
    HorizonTooLong { horizon: usize, len: usize },

    #[error("eigen-solver failed (condition estimate {condition:.3e})")]
    EigenFailure { condition: f64 },

    #[error("svd failed to converge")]
    SvdFailure,

    #[error("defective eigenvalue cluster near {eigenvalue}: algebraic multiplicity {algebraic}, geometric {geometric}")]
    DefectiveCluster {
        eigenvalue: String,
        algebraic: usize,
        geometric: usize,
    },

    #[error("duplicate model label `{0}`")]
    DuplicateLabel(String),

    #[error("model `{0}` carries no training provenance")]
    MissingProvenance(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("trajectory {id}: {source}")]
    InTrajectory {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed input or configuration.
    pub fn is_numerical(&self) -> bool {
        if let Error::InTrajectory { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::IntegrationFailure { .. }
                | Error::LeftBoundingBox { .. }
                | Error::OutOfDomain { .. }
                | Error::NonFinite
                | Error::RankZero
                | Error::EigenFailure { .. }
                | Error::SvdFailure
                | Error::DefectiveCluster { .. }
        )
    }
}
