use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// 1: configuration, input or I/O problem; 2: numerical failure;
    /// 3: a `check` threshold was breached.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl From<tns_core::Error> for CliError {
    fn from(e: tns_core::Error) -> Self {
        use tns_core::Error as E;
        match e {
            E::BlowUp { .. } | E::NoConvergence(_) | E::ReplayMissed { .. } => CliError::Numerical(e.to_string()),
            E::ZeroWaveVector | E::InvalidParameter { .. } | E::TruncationMismatch(..) | E::NonUniformGrid { .. } => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
