use std::fmt;
use std::path::PathBuf;

/// Pipeline stage that produced an error inside [`crate::forecast::run_raf_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Retrieve,
    Augment,
    Forecast,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Retrieve => "retrieve",
            Stage::Augment => "augment",
            Stage::Forecast => "forecast",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("window out of range: origin={origin}, lookback={lookback}, horizon={horizon}, series length={len}")]
    WindowBounds {
        origin: usize,
        lookback: usize,
        horizon: usize,
        len: usize,
    },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { date: String, row: usize },

    #[error("unknown column '{name}'; known columns: {}", known.join(", "))]
    UnknownColumn { name: String, known: Vec<String> },

    #[error("column '{0}' has no observed values")]
    EmptyColumn(String),

    #[error("span of {len} rows is too short; need at least lookback + horizon = {min}")]
    SpanTooShort { len: usize, min: usize },

    #[error("retrieval pool is empty after exclusion; use the no-retrieval path")]
    EmptyPool,

    #[error("autoregression needs at least {min} context rows (2p+1), got {got}")]
    InsufficientRows { min: usize, got: usize },

    #[error("normal equations are singular; use a ridge damping > 0")]
    Singular,

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("protocol error: {message} (payload: {excerpt})")]
    Protocol { message: String, excerpt: String },

    #[error("remote error for request {id}: {message}")]
    Remote { id: String, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{stage} stage failed: {source}")]
    Pipeline {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("missing slice {requested}; available: {}", available.join(", "))]
    MissingSlice { requested: String, available: Vec<String> },

    #[error("knowledge base file: {0}")]
    KbFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    pub(crate) fn at_stage(self, stage: Stage) -> Self {
        Error::Pipeline {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
