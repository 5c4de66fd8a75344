use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("replay buffer holds {have} transitions, need {need}")]
    InsufficientBuffer { have: usize, need: usize },

    #[error("update family `{0}` requires learner state")]
    MissingLearnerState(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("not enough samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("zero variance input")]
    ZeroVariance,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: u64, detail: String },

    #[error("snapshot mismatch on revert: {0}")]
    RevertMismatch(String),

    #[error("checkpoint format version {found} not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Contract(_) => "contract",
            Error::InsufficientBuffer { .. } => "insufficient_buffer",
            Error::MissingLearnerState(_) => "missing_learner_state",
            Error::Empty(_) => "empty",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::ZeroVariance => "zero_variance",
            Error::NonFinite(_) => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::RevertMismatch(_) => "revert_mismatch",
            Error::Version { .. } => "version",
            Error::Corrupt(_) => "corrupt",
            Error::Io(_) => "io",
            Error::ConfigParse(_) => "config_parse",
        }
    }
}
