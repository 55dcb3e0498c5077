use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains non-finite values")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("paired datasets differ in length: {left} vs {right}")]
    PairedLength { left: usize, right: usize },

    #[error("matrix is singular; a positive regularizer is required")]
    Singular,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate graph: vertex {0} has zero degree")]
    ZeroDegree(usize),

    #[error("numerical consistency check failed: {0}")]
    Numerical(String),

    #[error("graph-based views have no out-of-sample extension")]
    NoOutOfSample,

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
