use thiserror::Error;

use crate::spectral::{SpectralField, TruncationParams};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("the zero wavevector has no basis element")]
    ZeroWaveVector,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("truncation mismatch: {0:?} vs {1:?}")]
    TruncationMismatch(TruncationParams, TruncationParams),

    #[error("numerical blow-up at t = {time}: |u|_H = {norm:e}")]
    BlowUp {
        time: f64,
        norm: f64,
        state: Box<SpectralField>,
    },

    #[error("time grid is not uniform: step {index} has width {width}, expected {expected}")]
    NonUniformGrid {
        index: usize,
        width: f64,
        expected: f64,
    },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("control replay missed the target: distance {distance:e} > tolerance {tolerance:e}")]
    ReplayMissed { distance: f64, tolerance: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
