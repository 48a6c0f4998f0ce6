use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient data: need {needed}, have {have} ({what})")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        have: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("ill-conditioned matrix: {0}")]
    Conditioning(String),

    #[error("query time {time} outside fitted range [{min}, {max}]")]
    Extrapolation { time: f64, min: f64, max: f64 },

    #[error("calibration needs at least {min_k} scores for delta = {delta}, got {k}")]
    Calibration { k: usize, min_k: usize, delta: f64 },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("hyperparameter optimization failed: {0}")]
    Optimization(String),

    #[error("stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
