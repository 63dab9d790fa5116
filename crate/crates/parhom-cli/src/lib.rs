//! Configuration-driven experiment runner and verification harness for the
//! parabolic homogenization laboratory.

pub mod config;
pub mod emit;
pub mod run;
pub mod verify;

/// CLI-level errors split by exit code: configuration problems exit 1,
/// scientific invariant violations exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Science(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Science(_) => 2,
        }
    }
}

impl From<parhom_core::Error> for CliError {
    fn from(e: parhom_core::Error) -> Self {
        use parhom_core::Error as E;
        match e {
            // mid-compute aborts are scientific failures, everything the
            // user could have configured differently is a config error
            E::NanDetected { .. } | E::BoundaryPositivity(_) => CliError::Science(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
