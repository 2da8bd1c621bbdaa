use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid velocity model: {0}")]
    InvalidVelocity(String),

    #[error("invalid opacity: {0}")]
    InvalidOpacity(String),

    #[error("unsupported opacity family for a closed-form primitive: {0}")]
    UnsupportedOpacity(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("non-ergodic noise model: generator null space has dimension {0}")]
    NonErgodic(usize),

    #[error("singular Poisson solve: {0}")]
    SingularPoisson(String),

    #[error("kernel not PSD: eigenvalue {eigenvalue:e} below -1e-8 * {max:e}")]
    KernelNotPsd { eigenvalue: f64, max: f64 },

    #[error("noise amplitude/epsilon too large for dt at step {step}: |exponent| = {exponent:.3} > 50")]
    NoiseOverflow { step: usize, exponent: f64 },

    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },

    #[error("positivity lost at step {step}: min density {min:e}")]
    PositivityLost { step: usize, min: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Config(#[from] crate::config::ConfigErrors),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
