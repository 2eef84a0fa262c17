use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KbrError>;

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    PriorMean,
    KbrWeights,
    PosteriorOperator,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::PriorMean => "prior mean",
            Stage::KbrWeights => "kbr weights",
            Stage::PosteriorOperator => "posterior operator",
            Stage::Evaluation => "evaluation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The smallest eigenvalue (or pivot) estimate fell below the relative
    /// threshold.
    #[error("numerically singular matrix: smallest eigenvalue estimate {smallest:e} below threshold {threshold:e}")]
    Singular { smallest: f64, threshold: f64 },

    #[error("cannot fit class {class}: {reason}")]
    Fit { class: usize, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{stage} stage failed: {source}")]
    AtStage {
        stage: Stage,
        #[source]
        source: Box<KbrError>,
    },
}

impl KbrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KbrError::InvalidInput(msg.into())
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        KbrError::AtStage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips stage attribution and returns the underlying error.
    pub fn root(&self) -> &KbrError {
        match self {
            KbrError::AtStage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(KbrError::DimensionMismatch { expected, actual });
    }
    Ok(())
}
