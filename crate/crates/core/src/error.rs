use thiserror::Error;

/// Errors raised by the solver, generators and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("matrix is rank deficient: diagonal factor {value:e} below {threshold:e} at column {column}")]
    RankDeficient {
        column: usize,
        value: f64,
        threshold: f64,
    },

    #[error("matrix has a trivial kernel ({rows}x{cols}, full column rank)")]
    FullRankSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("support of z is empty")]
    EmptySupport,

    #[error("no simplex vertex u with <u, Pz> <= 0 at iteration {iteration}")]
    NoImprovingVertex { iteration: usize },

    #[error("degenerate line search (denominator {denominator:e}) at iteration {iteration}")]
    DegenerateStep { iteration: usize, denominator: f64 },

    #[error("away-step cap is singular at iteration {iteration}")]
    AwayCapSingular { iteration: usize },

    #[error("both L and its complement report a strictly positive point")]
    BothSidesInterior,

    #[error("maximum of the interior point is attained at several indices after {attempts} draws")]
    DegenerateMax { attempts: usize },

    #[error("zero vector does not span a subspace")]
    ZeroVector,

    #[error("no strictly positive kernel point found")]
    NoFeasibleStart,

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
