use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the model, simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unsupported beam splitter R={reflectance}, T={transmittance}: the closed-form model requires R = T")]
    UnsupportedSplitter { reflectance: f64, transmittance: f64 },

    #[error("grid too coarse: step {step_ps} ps exceeds FWHM/8 = {limit_ps} ps")]
    GridTooCoarse { step_ps: f64, limit_ps: f64 },

    #[error("grid is not uniform")]
    NonUniformGrid,

    #[error("channel {0} has no clicks")]
    EmptyChannel(&'static str),

    #[error("bin width {bin_width_ps} ps gives {bins} bins over the window (limit 1e6)")]
    BinWidth { bin_width_ps: f64, bins: f64 },

    #[error("insufficient bins: {found} usable, need at least {needed}")]
    InsufficientBins { found: usize, needed: usize },

    #[error("model curve does not cover [{lo_ps}, {hi_ps}] ps")]
    ModelRange { lo_ps: f64, hi_ps: f64 },

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate scan: {0}")]
    DegenerateScan(String),

    #[error("expected click count {0:.3e} exceeds the 1e9 guard")]
    Overflow(f64),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_)
                | Error::DegenerateScan(_)
                | Error::GridTooCoarse { .. }
                | Error::InsufficientBins { .. }
                | Error::Overflow(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
