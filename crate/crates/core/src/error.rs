use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is outside the supported range 2..=64")]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("column {0} has no positive entry; matrix is not allowable")]
    ZeroColumn(usize),

    #[error("matrix has no nonzero row")]
    AllRowsZero,

    #[error("coordinate {index} = {value} is negative or not finite")]
    InvalidCoordinate { index: usize, value: f64 },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("invalid ensemble: {0}")]
    InvalidSpec(String),

    #[error("generator rejected {0} consecutive draws")]
    TooManyRejections(u64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("calibration did not reach |gamma| <= {tol} after {rounds} rounds (last estimate {gamma_hat})")]
    CalibrationFailed { tol: f64, rounds: usize, gamma_hat: f64 },

    #[error("ensemble is not rank one: atom {0} is not a multiple of the all-ones matrix")]
    NotRankOne(usize),

    #[error("increments {0:?} do not lie on a common lattice; use Monte Carlo instead")]
    NonLattice(Vec<f64>),

    #[error("stopping time exceeded the cap of {0} steps")]
    Exceeded(u64),

    #[error("degenerate survival curve: {0}")]
    DegenerateCurve(String),

    #[error("reference window was never visited; enlarge the window or run more steps")]
    ReferenceStarved,

    #[error("empty tail region: {0}")]
    EmptyTail(String),

    #[error("unknown observer '{0}'")]
    UnknownObserver(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
