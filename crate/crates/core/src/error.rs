use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knob `{knob}`: {reason}")]
    InvalidKnob { knob: String, reason: String },

    #[error("invalid knob space: {0}")]
    InvalidSpace(String),

    #[error("invalid knob setting {setting}: {reason}")]
    InvalidSetting { setting: String, reason: String },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("data error at line {line}: {reason}")]
    Data { line: usize, reason: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("unknown input `{0}`")]
    UnknownInput(String),

    #[error("cannot split dataset: {0}")]
    Split(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("config is missing required key `{0}`")]
    MissingKey(String),

    #[error("bad range `{text}` at column {position}: {reason}")]
    Range {
        text: String,
        position: usize,
        reason: String,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("harness error: {0}")]
    Harness(String),

    #[error("missing upstream artifact `{}` (run the `{task}` task first)", path.display())]
    Dependency { path: PathBuf, task: String },

    #[error("task plan error: {0}")]
    Plan(String),

    #[error("I/O error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidKnob { .. }
            | Error::InvalidSpace(_)
            | Error::InvalidSetting { .. }
            | Error::InvalidConstraint(_) => "invalid-input",
            Error::Data { .. } | Error::InvalidRecord(_) | Error::UnknownInput(_) => "data",
            Error::Split(_) => "split",
            Error::Config { .. } | Error::MissingKey(_) | Error::Range { .. } => "config",
            Error::Model(_) | Error::Serde(_) => "model",
            Error::Harness(_) => "harness",
            Error::Dependency { .. } | Error::Plan(_) => "dependency",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code associated with [`Error::category`].
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "invalid-input" => 3,
            "data" => 4,
            "split" => 5,
            "config" => 6,
            "model" => 7,
            "harness" => 8,
            "dependency" => 9,
            _ => 10,
        }
    }
}
