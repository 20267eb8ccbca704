use thiserror::Error;

/// Errors raised by the calibration toolkit.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset is empty")]
    EmptyDataset,

    /// Every record in the fitting set has f and g predicting different classes,
    /// so the agreement-masked objective has nothing to fit.
    #[error("all {total} records disagree; agreement-masked objective is undefined")]
    AllDisagree { total: usize },

    #[error("record `{id}` has no label")]
    MissingLabel { id: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CalibError>;

/// Process exit codes used by the `calign` binary.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const GENERIC: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const ALL_DISAGREE: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const CONFIG: i32 = 5;
}

impl CalibError {
    pub(crate) fn config(field: &str, msg: impl Into<String>) -> Self {
        CalibError::Config {
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CalibError::Parse { .. } | CalibError::EmptyDataset | CalibError::Json(_) => {
                exit_code::PARSE
            }
            CalibError::AllDisagree { .. } => exit_code::ALL_DISAGREE,
            CalibError::Config { .. } => exit_code::CONFIG,
            _ => exit_code::GENERIC,
        }
    }
}
