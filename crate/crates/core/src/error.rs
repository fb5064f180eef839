use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    /// Adaptive quadrature hit its subdivision budget.
    #[error("quadrature did not converge on [{lo}, {hi}]: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("{what}: argument {value:e} outside admissible range ({lo:e}, {hi:e})")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("invalid field: {0}")]
    Field(String),

    #[error("touch-down: f reached {min_f:e}, u is unbounded")]
    TouchDown { min_f: f64 },

    #[error("solver failure at t = {t:e}: {reason}")]
    Solver { t: f64, reason: String },

    #[error("design failure: {0}")]
    Design(String),

    #[error("config error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
