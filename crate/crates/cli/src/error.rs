use emoadapt_core::corpus::CorpusError;
use emoadapt_core::model::ModelError;
use emoadapt_core::stats::StatsError;
use emoadapt_core::tensor_core::TensorError;
use emoadapt_core::trainer::TrainError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

fn tensor_class(e: &TensorError, msg: String) -> CliError {
    match e {
        TensorError::NonFinite { .. } => CliError::Numeric(msg),
        _ => CliError::Data(msg),
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        let msg = e.to_string();
        tensor_class(&e, msg)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match &e {
            ModelError::Tensor(t) => tensor_class(t, msg),
            ModelError::InvalidSpec(_) => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::Config(_) => CliError::Usage(msg),
            TrainError::Model(m) => m.into(),
            TrainError::Tensor(t) => tensor_class(&t, msg),
            _ => CliError::Data(msg),
        }
    }
}
