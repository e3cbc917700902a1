use std::fmt;

use wvamp_core::Error;

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn not_converged(message: impl Into<String>) -> Self {
        Self { code: EXIT_NOT_CONVERGED, message: message.into() }
    }

    /// Prefixes the message, keeping the code.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self { code: self.code, message: format!("{what}: {}", self.message) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. }
            | Error::NotNormalized { .. }
            | Error::NegativeTime(_)
            | Error::SingularPostselection
            | Error::DegenerateSpectrum
            | Error::UndefinedPostselection
            | Error::Dataset(_) => EXIT_CONFIG,
            Error::DegenerateNormalization(_)
            | Error::NumericFailure { .. }
            | Error::NumericDomain { .. }
            | Error::ProfileNotBracketed { .. } => EXIT_NUMERIC,
            Error::Io(_) => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}
