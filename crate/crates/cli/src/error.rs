use std::path::PathBuf;

use dbdesc_core::introspect::DbError;
use dbdesc_core::model::ModelError;
use dbdesc_core::mschema::AssemblyError;
use dbdesc_core::pipeline::PipelineError;

/// Every failure the tool reports, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("database: {0}")]
    Db(#[from] DbError),
    #[error("model: {0}")]
    Model(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cache: {0}")]
    Cache(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Db(_) => 3,
            CliError::Model(_) => 4,
            CliError::Io { .. } | CliError::Cache(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        match err {
            ModelError::Cache(msg) => CliError::Cache(msg),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        let done = err.partial.table_infos.len();
        match err.error {
            dbdesc_core::pipeline::StageError::Model(e) => e.into(),
            other => CliError::Model(format!("{other} (stopped after {done} table analyses)")),
        }
    }
}

impl From<AssemblyError> for CliError {
    fn from(err: AssemblyError) -> Self {
        CliError::Model(err.to_string())
    }
}
