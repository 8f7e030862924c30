use thiserror::Error;

/// Failure of a single simulator call.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("event budget of {cap} exceeded")]
    BudgetExceeded { cap: u64 },
    #[error("simulated series is degenerate")]
    DegenerateSeries,
    #[error("parameter outside the simulator domain: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance is not positive definite: {0}")]
    SingularCovariance(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("initial state lies outside the target support")]
    InvalidInit,
    #[error("target log-density is NaN or +inf at {0:?}")]
    NonFiniteDensity(Vec<f64>),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("simulator failed {attempts} times in round {round}")]
    SimulatorFailure { round: usize, attempts: usize },
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("task `{0}` has no exact likelihood")]
    MissingExactLikelihood(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("{origin}:{line}: {message}")]
    FileFormat {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("config line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_round(self, round: usize) -> Error {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn format(origin: impl Into<String>, line: usize, message: impl Into<String>) -> Error {
        Error::FileFormat {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
