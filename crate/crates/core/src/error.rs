use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("empty outcome set")]
    EmptyEvent,

    #[error("unknown realization {0:?}")]
    UnknownRealization(String),

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point is outside the price space")]
    OutsidePriceSpace,

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("switch plan is inconsistent: {0}")]
    Inconsistent(String),

    #[error("timestamps must be non-decreasing ({prev} then {next})")]
    TimeOrder { prev: f64, next: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
