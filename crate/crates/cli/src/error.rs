use std::fmt;

/// CLI failure with its exit code: 1 verification failure, 2 validation
/// error, 3 numerical-accuracy error.
#[derive(Debug)]
pub enum CliError {
    Verification(String),
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl From<levy_lp::Error> for CliError {
    fn from(e: levy_lp::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
