use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid variable roles: {0}")]
    InvalidRoles(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("loading submatrix over columns {columns:?} is singular (condition number {condition:.3e})")]
    SingularSubmatrix { columns: Vec<usize>, condition: f64 },

    #[error("only {available} usable rows, at least {needed} required")]
    InsufficientRows { needed: usize, available: usize },

    #[error("design matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficientDesign { condition: f64 },

    #[error("too few observations for {what}")]
    TooFewObservations { what: String },

    #[error("denominator coefficient {value:.3e} is numerically zero")]
    DenominatorNearZero { value: f64 },

    #[error("linear system is singular (condition number {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("covariance scaling factor {value:.3e} is numerically zero")]
    KNearZero { value: f64 },

    #[error("no pivot combination succeeded for variable {var}: {last}")]
    NoSuccessfulCombination { var: usize, last: Box<Error> },

    #[error("covariance cell ({row}, {col}): {source}")]
    Cell {
        row: usize,
        col: usize,
        source: Box<Error>,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("rank {r} out of range for dimension {p}")]
    RankOutOfRange { r: usize, p: usize },

    #[error("conditioning block of the imputation covariance is singular")]
    SingularConditioningBlock,

    #[error("column {0} has no observed entry")]
    FullyMissingColumn(usize),

    #[error("no missing cells to evaluate")]
    NoMissingCells,

    #[error("zero matrix has no RV coefficient")]
    ZeroMatrix,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("method `{0}` is not implemented")]
    MethodNotImplemented(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        if err.is_io() {
            return Error::Io(err.to_string());
        }
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
