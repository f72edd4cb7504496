use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rule is degenerate: every pattern has the same rule value {0}")]
    RuleDegenerate(f64),

    #[error("gain calibration failed: target {target} bits unreachable, best achieved {achieved} bits")]
    CalibrationFailed { target: f64, achieved: f64 },

    #[error("point set is not closed under the rotation group: {0}")]
    SymmetryBroken(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("value {value} outside binning range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("non-finite value in {0}")]
    NumericFault(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{failed} of {total} runs failed, exceeding the failure budget")]
    TooManyFailures { failed: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
