use thiserror::Error;

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("explosion guard tripped: {0}")]
    Explosion(String),
    #[error("estimator undefined: {0}")]
    Undefined(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Explosion(_) => 3,
            CliError::Undefined(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<bbmmi_core::engine::EngineError> for CliError {
    fn from(e: bbmmi_core::engine::EngineError) -> Self {
        match e {
            bbmmi_core::engine::EngineError::ExplosionGuard { .. } => CliError::Explosion(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<bbmmi_core::estimators::EstimatorError> for CliError {
    fn from(e: bbmmi_core::estimators::EstimatorError) -> Self {
        use bbmmi_core::estimators::EstimatorError as E;
        match e {
            E::EmptySystem { .. } | E::AllWeightsZero { .. } => CliError::Undefined(e.to_string()),
            E::Engine(inner) => inner.into(),
            E::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<bbmmi_core::models::ModelError> for CliError {
    fn from(e: bbmmi_core::models::ModelError) -> Self {
        CliError::Config(format!("model: {e}"))
    }
}

impl From<bbmmi_core::oracle::OracleError> for CliError {
    fn from(e: bbmmi_core::oracle::OracleError) -> Self {
        CliError::Other(format!("oracle: {e}"))
    }
}
