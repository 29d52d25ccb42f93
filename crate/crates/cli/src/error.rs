use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The scene or the command line is wrong.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] cellavg::Error),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// 2 for validation failures, 1 for numerical or output failures.
    pub fn exit_code(&self) -> u8 {
        use cellavg::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(E::NonInvertible(_) | E::RankDeficient | E::CombinatorialChange(_)) => 1,
            CliError::Core(_) => 2,
            CliError::Output(_) => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
