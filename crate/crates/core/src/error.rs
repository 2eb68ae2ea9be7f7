use std::path::PathBuf;

use crate::grid_model::TraceBundle;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("closed loop is unstable (spectral radius {spectral_radius:.6} >= 1)")]
    Unstable { spectral_radius: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value at index {index} of a signal trace")]
    NonFinite { index: usize },

    /// Writes on an authenticated line are dropped. The simulation still runs
    /// to completion and the untouched bundle travels with the error.
    #[error(
        "channel {channel} is authenticated: {rejected_writes} interceptor writes rejected (first at step {first_step})"
    )]
    AuthenticatedChannel {
        channel: usize,
        first_step: usize,
        rejected_writes: usize,
        bundle: Box<TraceBundle>,
    },

    #[error("watermark template has zero energy on the window")]
    ZeroTemplate,

    #[error("calibration needs at least {required} clean blocks, got {available}")]
    Calibration { required: usize, available: usize },

    #[error("baseline RMS {rms:e} is below the floor {floor:e}; amplitude-scaling gain undefined")]
    DegenerateBaseline { rms: f64, floor: f64 },

    #[error("sensor map not invertible at reading {reading} (eps = {eps})")]
    NonInvertible { reading: f64, eps: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
