use std::fmt;
use std::process::ExitCode;

use cspr::error::{Error, ErrorCategory};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Usage(_) => ErrorCategory::Usage,
            CliError::Lib(e) => e.category(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.category() {
            ErrorCategory::Usage => 2,
            ErrorCategory::Format => 3,
            ErrorCategory::Compute => 4,
        })
    }
}

fn category_name(c: ErrorCategory) -> &'static str {
    match c {
        ErrorCategory::Usage => "usage",
        ErrorCategory::Format => "format",
        ErrorCategory::Compute => "compute",
    }
}

/// One line: `error[<category>]: <message>`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        };
        write!(
            f,
            "error[{}]: {}",
            category_name(self.category()),
            msg.replace('\n', " ")
        )
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}
