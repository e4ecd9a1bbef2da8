use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e}): {context}")]
    Quadrature {
        requested: f64,
        achieved: f64,
        context: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model value {value} is not positive in bin {bin} (t = {t} ns)")]
    Evaluation { bin: usize, t: f64, value: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("rank-deficient normal equations, null-space direction: {direction}")]
    RankDeficient { direction: String },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }
}
