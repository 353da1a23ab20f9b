use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a precondition or type invariant.
    #[error("domain error: {0}")]
    Domain(String),

    /// A root-finding inversion found no sign change in its bracket.
    #[error("inversion failed: {0}")]
    Inversion(String),

    /// A value lies outside the band a model can produce.
    #[error("{quantity} = {value} is outside the admissible interval [{lo}, {hi}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A least-squares fit that did not converge within its iteration budget.
    /// The best parameters found so far are carried as a JSON record.
    #[error("fit did not converge after {iterations} iterations (best-so-far: {best})")]
    FitNotConverged {
        iterations: usize,
        best: serde_json::Value,
    },

    /// A linear model with too few independent points.
    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Fail with a domain error unless `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {value}")))
    }
}
