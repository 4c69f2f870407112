//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("layer {index}: input dim {got} does not match previous output {expected}")]
    LayerChainMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("final layer must have output dimension 1, got {0}")]
    NonScalarOutput(usize),

    #[error("tracked-variable count {0} exceeds the build-time cap {max}", max = crate::multidual::MAX_VARS)]
    TooManyVariables(usize),

    #[error("box has {0} dimensions; vertex enumeration is capped at 20")]
    BoxTooLarge(usize),

    #[error("invalid box: lower[{index}] = {lower} is not below upper[{index}] = {upper}")]
    InvalidBox {
        index: usize,
        lower: f64,
        upper: f64,
    },

    #[error("degenerate normaliser: raw integral {0} is below 1e-9 in magnitude")]
    DegenerateNormaliser(f64),

    #[error("degenerate density: conditional mass {0} is below 1e-12 along dim {dim}", dim = .1)]
    DegenerateDensity(f64, usize),

    #[error("direction field vanishes (norm {0} < 1e-8) inside the domain")]
    SingularDirection(f64),

    #[error("action integral {0} is too small to take a log")]
    VanishingActionIntegral(f64),

    #[error("non-finite loss at step {step} (parameter norm {param_norm})")]
    NonFiniteLoss { step: usize, param_norm: f64 },

    #[error("non-finite integrand sample at {0:?}")]
    NonFiniteSample(Vec<f64>),

    #[error("empty batch")]
    EmptyBatch,

    #[error("inequality constraints require a positive bound, got {0}")]
    NonPositiveBound(f64),

    #[error("inequality constraints require a positivity-constrained network")]
    InequalityNeedsPositivity,

    #[error("checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("checkpoint version {got} unsupported (expected {expected})")]
    CheckpointVersion { expected: u32, got: u32 },

    #[error("checkpoint holds {got} parameters, architecture needs {expected}")]
    ParamCountMismatch { expected: usize, got: usize },

    #[error("config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
