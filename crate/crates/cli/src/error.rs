use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ncel::Error),

    #[error("gradient check failed: relative error {0:.3e} is not below {1:e}")]
    GradientCheck(f64, f64),

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use ncel::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Config(_)) => 2,
            CliError::GradientCheck(..) | CliError::Core(E::Numeric(_) | E::Degenerate(_)) => 4,
            CliError::Output { .. } | CliError::Core(_) => 3,
        }
    }
}
