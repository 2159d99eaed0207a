use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid family parameters: {0}")]
    InvalidFamilyParams(String),
    #[error("invalid embodiment spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite simulation state: {0}")]
    NonFiniteState(String),

    #[error("target joint `{0}` has no counterpart in the source embodiment")]
    UnmatchableJoint(String),
    #[error("singular hip coupling: |cos(alpha)| = {0:e} < 1e-6")]
    SingularCoupling(f64),
    #[error("alignment is not invertible: |PhiPlus*Phi - I|_inf = {0:e}")]
    BrokenInvertibility(f64),
    #[error("observation layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation at `{0}`")]
    NonFiniteActivation(String),
    #[error("stale cache: parameters changed since the forward pass (cache v{cache}, params v{params})")]
    StaleCache { cache: u64, params: u64 },

    #[error("site `{0}` cannot host this adaptation method")]
    UnsupportedSite(String),
    #[error("invalid rank: {0}")]
    InvalidRank(String),
    #[error("operation requires a LoRA-adapted policy, found {0}")]
    WrongMethod(String),

    #[error("invalid motion parameters: {0}")]
    InvalidParams(String),
    #[error("motion library is empty")]
    EmptyLibrary,
    #[error("frame budget {0} is too small (minimum 2)")]
    BudgetTooSmall(usize),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("no episode results to aggregate")]
    EmptyResults,

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
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

    pub(crate) fn csv(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        Error::Csv {
            path: path.into(),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
