use std::path::PathBuf;

use gmfilter::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{module}: {source}")]
    Core { module: &'static str, source: gmfilter::Error },

    #[error("non-finite value in report field `{0}`")]
    NonFinite(String),

    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    /// Wraps a core error with the module it came from.
    pub fn core(module: &'static str) -> impl Fn(gmfilter::Error) -> CliError {
        move |source| CliError::Core { module, source }
    }

    /// Process exit status: 2 config, 3 numerical, 4 infeasible class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core { source, .. } => match source.class() {
                ErrorClass::Input => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::Infeasible => 4,
            },
            CliError::NonFinite(_) => 3,
            CliError::Output(_) => 1,
        }
    }
}
