use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by pricing, inversion, simulation and quote handling.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation.
    #[error("invalid {name} = {value}: {reason}")]
    InvalidInput {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Quoted price is at or below the intrinsic value, so no volatility reproduces it.
    #[error("price {price} is not above intrinsic value {intrinsic}")]
    BelowIntrinsic { price: f64, intrinsic: f64 },

    /// Quoted price is at or above the model's no-arbitrage upper bound.
    #[error("price {price} is not below the upper no-arbitrage bound {bound}")]
    AboveUpperBound { price: f64, bound: f64 },

    /// Root finder could not bracket or converge.
    #[error("implied volatility solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: u32, residual: f64 },

    #[error("expected CSV header `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidInput {
            name,
            value,
            reason,
        }
    }

    /// True for errors caused by a quote that lies outside what the model can reproduce.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::BelowIntrinsic { .. } | Error::AboveUpperBound { .. } | Error::NoConvergence { .. }
        )
    }

    /// True for read/write and file-format failures.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Csv(_) | Error::HeaderMismatch { .. }
        )
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::invalid(name, value, "must be finite"));
    }
    if value <= 0.0 {
        return Err(Error::invalid(name, value, "must be positive"));
    }
    Ok(value)
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(name, value, "must be finite"))
    }
}
