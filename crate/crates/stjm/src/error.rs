//! Error type shared across the crate.

/// Errors produced by dataset construction, fitting and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("feature `{0}` has no observed values")]
    FullyMissingFeature(String),

    #[error("feature count mismatch: expected {expected}, got {got}")]
    FeatureCountMismatch { expected: usize, got: usize },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid coordinates: {0}")]
    InvalidCoordinates(String),

    #[error("covariance factorization failed even after diagonal jitter")]
    FactorizationFailed,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("label alignment supports at most {max} states, got {got}")]
    TooManyStates { max: usize, got: usize },

    #[error("balanced accuracy undefined: no class is present in the truth")]
    EmptyTruth,

    #[error("missing-value injection failed: a feature lost all observed values in {0} redraws")]
    MissingInjectionFailed(usize),

    #[error("gap injection: not enough interior time points to drop")]
    NotEnoughTimePoints,

    #[error("replicate with seed {seed} failed: {source}")]
    ReplicateFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
