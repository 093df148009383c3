//! Error type shared by every stage of the emulator pipeline.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage, used to tag errors surfaced by [`crate::emulator::fit_emulator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SparseFit,
    JointBasis,
    Eigen,
    Truncation,
    Projection,
    Inference,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::SparseFit => "sparse-fit",
            Stage::JointBasis => "joint-basis",
            Stage::Eigen => "eigendecomposition",
            Stage::Truncation => "truncation",
            Stage::Projection => "kl-projection",
            Stage::Inference => "inference",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("fit error: {msg} (condition estimate {condition:.3e})")]
    Fit { msg: String, condition: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("undefined sensitivity index: {0}")]
    UndefinedIndex(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for input/config problems, false for numerical-stage failures.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::Io(_) | Error::Json(_) | Error::Domain(_) => {
                true
            }
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
