use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    Unknown { key: String, line: usize },

    #[error("line {line}: key `{key}` already set on line {first}")]
    Duplicate {
        key: String,
        first: usize,
        line: usize,
    },

    #[error("missing required key `{0}`")]
    Missing(&'static str),

    #[error("key `{key}`: cannot read {value:?} as {expected}")]
    Type {
        key: &'static str,
        value: String,
        expected: &'static str,
    },

    #[error("key `{key}`: {reason}")]
    Constraint { key: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),

    /// A solver error together with the configuration keys that led to it,
    /// e.g. `experiment=simulate > dt`.
    #[error("{chain}: {source}")]
    Run {
        chain: String,
        #[source]
        source: mpfc_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: not a snapshot ({reason})")]
    BadSnapshot { path: PathBuf, reason: String },
}

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Csv { path, source }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
