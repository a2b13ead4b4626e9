//! CLI error taxonomy and process exit codes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error, 5 degenerate importance weights or monitor abort. Anything else
//! (I/O trouble writing a report, for instance) exits 1.

use std::fmt;

use recouple_core::CoreError;

/// Everything a run can fail with, tagged for the exit code it deserves.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: unreadable/invalid config file, inconsistent model
    /// description, invalid flag combination.
    Config(String),
    /// Bad data: unreadable/invalid CSV, schema mismatch, broken time grid.
    Data(String),
    /// A recursion produced something unusable mid-run.
    Numeric(String),
    /// Degenerate importance weights or a monitor signal the run cannot
    /// continue through.
    Abort(String),
    /// Plumbing failure (I/O, encoding).
    Io(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn abort(msg: impl Into<String>) -> Self {
        CliError::Abort(msg.into())
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Abort(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Abort(m) => write!(f, "run aborted: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::Data(m) => CliError::Data(m),
            CoreError::Numeric(m) | CoreError::Singular(m) => CliError::Numeric(m),
            CoreError::DegenerateWeights { .. } => CliError::Abort(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_match_taxonomy() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        assert_eq!(CliError::data("x").exit_code(), 3);
        assert_eq!(CliError::Numeric("x".into()).exit_code(), 4);
        assert_eq!(CliError::abort("x").exit_code(), 5);
        let from_core: CliError = recouple_core::CoreError::singular("s").into();
        assert_eq!(from_core.exit_code(), 4);
        let degen: CliError =
            recouple_core::CoreError::DegenerateWeights { ess: 0.0, floor: 1.0 }.into();
        assert_eq!(degen.exit_code(), 5);
    }
}
