use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("node {node} out of range for dimension {d}")]
    NodeOutOfRange { node: usize, d: usize },
    #[error("a tree on {d} nodes needs {expected} edges, got {got}")]
    WrongEdgeCount { d: usize, expected: usize, got: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge set is disconnected")]
    Disconnected,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("negative variogram value {0}")]
    NegativeGamma(f64),
    #[error("k = {k} outside the admissible range [{min}, {n}]")]
    KOutOfRange { k: usize, min: usize, n: usize },
    #[error("combination weights must be nonnegative with a positive entry")]
    AllZeroWeights,
    #[error("every spanning tree has infinite weight")]
    NoFiniteTree,
    #[error("brute-force enumeration supports d <= {max}, got {d}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("edge ({0}, {1}) is not in the tree")]
    MissingEdge(usize, usize),
    #[error("max-stable simulation exceeded {cap} proposals for one sample")]
    ProposalCapExceeded { cap: usize },
    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("need at least 2 numeric columns, got {0}")]
    TooFewColumns(usize),
    #[error("non-numeric cell at row {row}, column {col}: {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

impl Error {
    /// True for errors caused by malformed input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NoFiniteTree | Error::ProposalCapExceeded { .. } | Error::NegativeGamma(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
