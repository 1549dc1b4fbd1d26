//! Error taxonomy mapped onto process exit codes: 2 for schema problems,
//! 3 for numerical aborts, 4 for IO.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<lsbl_core::datagen::GenError> for CliError {
    fn from(e: lsbl_core::datagen::GenError) -> Self {
        match e {
            lsbl_core::datagen::GenError::BadConfig(_) => CliError::Schema(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<lsbl_core::datagen::ContainerError> for CliError {
    fn from(e: lsbl_core::datagen::ContainerError) -> Self {
        match e {
            lsbl_core::datagen::ContainerError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<lsbl_core::lsbl::ModelError> for CliError {
    fn from(e: lsbl_core::lsbl::ModelError) -> Self {
        match e {
            lsbl_core::lsbl::ModelError::Io(inner) => CliError::Io(inner.to_string()),
            lsbl_core::lsbl::ModelError::Parse { .. } => CliError::Io(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<lsbl_core::train::TrainError> for CliError {
    fn from(e: lsbl_core::train::TrainError) -> Self {
        match e {
            lsbl_core::train::TrainError::BadInput(msg) => CliError::Schema(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<lsbl_core::bayes::BayesError> for CliError {
    fn from(e: lsbl_core::bayes::BayesError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<lsbl_core::baselines::BaselineError> for CliError {
    fn from(e: lsbl_core::baselines::BaselineError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<lsbl_core::radar::RadarError> for CliError {
    fn from(e: lsbl_core::radar::RadarError) -> Self {
        match e {
            lsbl_core::radar::RadarError::BadConfig(_) => CliError::Schema(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<lsbl_core::metrics::MetricError> for CliError {
    fn from(e: lsbl_core::metrics::MetricError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
