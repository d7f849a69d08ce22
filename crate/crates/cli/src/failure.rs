use std::fmt;
use std::process::ExitCode;

use shared_kernel::Error;

/// Exit status classes of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Usage,
    Data,
    Numerical,
}

impl Class {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Class::Usage => 2,
            Class::Data => 3,
            Class::Numerical => 4,
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            class: Class::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            class: Class::Data,
            message: message.into(),
        }
    }

    pub fn context(self, what: &str) -> Self {
        Failure {
            message: format!("{what}: {}", self.message),
            ..self
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let class = match e {
            Error::Config(_) => Class::Usage,
            Error::Data(_) | Error::Domain(_) => Class::Data,
            Error::Numerical(_) | Error::NonConvergence { .. } => Class::Numerical,
        };
        Failure {
            class,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<rayon::ThreadPoolBuildError> for Failure {
    fn from(e: rayon::ThreadPoolBuildError) -> Self {
        Failure::usage(e.to_string())
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
