use thiserror::Error;

pub(crate) const USAGE: i32 = 2;
pub(crate) const IO: i32 = 3;
pub(crate) const DIMENSIONS: i32 = 4;
pub(crate) const DIVERGED: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Input { path: String, source: dipfuse::Error },

    #[error(transparent)]
    Core(#[from] dipfuse::Error),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("no sweep run succeeded")]
    SweepFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => USAGE,
            CliError::Io(_) => IO,
            CliError::SweepFailed => DIVERGED,
            CliError::Input { source, .. } | CliError::Core(source) => core_code(source),
        }
    }
}

fn core_code(e: &dipfuse::Error) -> i32 {
    use dipfuse::Error::*;
    match e {
        MalformedHeader(_) | Truncated { .. } | Unsupported(_) | Png(_) | Io(_) => IO,
        DimensionMismatch(_) => DIMENSIONS,
        InvalidArgument(_) => USAGE,
        NonFinite(_) | Diverged { .. } => DIVERGED,
    }
}
