use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] avqmetts_core::Error),

    /// Every artifact was written, but some size pair has no usable crossing.
    #[error("no usable Binder crossing: {0}")]
    NoCrossing(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for a missing crossing,
    /// 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        use avqmetts_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::NoCrossing(_) => 4,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(
                E::SizeMismatch { .. }
                | E::QubitOutOfRange { .. }
                | E::DuplicateQubit(_)
                | E::Parse { .. }
                | E::InvalidArgument(_)
                | E::EdCapExceeded { .. },
            ) => 2,
            CliError::Core(E::NoCrossing | E::AmbiguousCrossing(_)) => 4,
            _ => 1,
        }
    }
}
