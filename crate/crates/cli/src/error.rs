use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Output(_) => 1,
        }
    }
}

impl From<ergm_vi::Error> for CliError {
    fn from(e: ergm_vi::Error) -> Self {
        use ergm_vi::Error as E;
        let msg = e.to_string();
        match e {
            E::NonFinite { .. } | E::Numerical(_) => CliError::Numerical(msg),
            E::NodeOutOfRange { .. }
            | E::SelfLoop(_)
            | E::EmptyNodeSet
            | E::MissingCovariate(_)
            | E::InvalidCovariate { .. }
            | E::Io(_) => CliError::Data(msg),
            E::IncompatibleTerm { .. }
            | E::DimensionMismatch { .. }
            | E::InvalidConfig(_)
            | E::TooManyDyads { .. } => CliError::Config(msg),
        }
    }
}
