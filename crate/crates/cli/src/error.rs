use std::fmt;

use netmix::NetmixError;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERICAL: u8 = 4;

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: Self::USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: Self::DATA, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: Self::NUMERICAL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<NetmixError> for CliError {
    fn from(e: NetmixError) -> Self {
        let code = if e.is_data_error() {
            Self::DATA
        } else if e.is_numerical() {
            Self::NUMERICAL
        } else {
            Self::USAGE
        };
        Self { code, message: e.to_string() }
    }
}
