//! Error type shared by every stage of the analysis chain.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Too few samples, pulses or segments for the requested precision.
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("resolution aliasing: {0}")]
    ResolutionAliasing(String),

    #[error("noise-floor calibration failed: {0}")]
    Calibration(String),

    /// A scheduled calibration pulse was not reconstructed where expected.
    #[error("detector response: {0}")]
    DetectorResponse(String),

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error(
        "fit did not converge: {message} (gradient norm {gradient_norm:.3e}, state {state:?})"
    )]
    NonConvergence {
        message: String,
        state: Vec<f64>,
        gradient_norm: f64,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported schema version {found} (this build reads major version {supported})")]
    Schema { found: String, supported: u32 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }

    /// Innermost error, unwrapping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
