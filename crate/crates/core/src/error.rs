use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed template {template_id:?}: {reason}")]
    MalformedTemplate { template_id: String, reason: String },

    #[error("template {0:?} has no surviving annotations after filtering")]
    EmptyAfterFilter(String),

    #[error("no ground-truth score for template {0:?}")]
    MissingTruth(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("no recorded score for {template_id:?} (pair {pair_index}, gender {gender}) in provider {provider:?}")]
    MissingRecordedScore {
        provider: String,
        template_id: String,
        pair_index: usize,
        gender: char,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyGroup(&'static str),

    #[error("inconsistent modality count: expected {expected}, found {found} (row {row})")]
    InconsistentK {
        expected: usize,
        found: usize,
        row: usize,
    },

    #[error("normal matrix is not positive definite (beta={beta}, lambda={lambda})")]
    SingularSystem { beta: f64, lambda: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no sweep point within the accuracy budget {0}")]
    EmptyBudgetSet(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularSystem { .. } | Error::NonFinite(_) | Error::EmptyBudgetSet(_) => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
