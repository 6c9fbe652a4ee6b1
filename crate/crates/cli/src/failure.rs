//! Failure classes and their process exit codes.

use std::fmt;

use pansharp_core::Error;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or an invalid configuration value.
    Usage(String),
    /// Unreadable or malformed input.
    Data(String),
    /// A non-finite value during computation.
    Numeric(String),
    /// A check ran and did not pass.
    Verification(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else if matches!(e, Error::Config(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<pansharp_tensor::TensorError> for Failure {
    fn from(e: pansharp_tensor::TensorError) -> Self {
        Error::from(e).into()
    }
}
