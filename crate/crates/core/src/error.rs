use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("g2 is undefined for a zero-mean distribution")]
    UndefinedG2,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("accuracy target not met: {0}")]
    Accuracy(String),
    #[error("singular point: {0}")]
    SingularPoint(String),
    #[error("saturated: {0}")]
    Saturated(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}

/// Rejects NaN and values outside `[lo, hi]`.
pub(crate) fn check_range(name: &str, x: f64, lo: f64, hi: f64) -> Result<()> {
    ensure(x >= lo && x <= hi, || format!("{name} = {x} outside [{lo}, {hi}]"))
}

pub(crate) fn check_nonneg(name: &str, x: f64) -> Result<()> {
    ensure(x.is_finite() && x >= 0.0, || format!("{name} = {x} must be finite and >= 0"))
}
