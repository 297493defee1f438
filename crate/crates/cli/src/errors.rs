//! Exit-code aware error type.
//!
//! Every command returns [`CliError`]; `main` maps it onto the documented
//! exit codes: 0 success, 1 runtime error (I/O, network, computation),
//! 2 usage or format error (bad flags, malformed input files).

use std::fmt;
use std::process::ExitCode;

use gst_core::patch::PatchError;
use gst_core::scene::BundleError;

/// An error plus its exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or malformed input data → exit 2.
    Usage(anyhow::Error),
    /// Failure while doing otherwise valid work → exit 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn runtime(err: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(err.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.into())
    }
}

/// Scene bundle problems: I/O is a runtime failure, everything else is a
/// format violation.
impl From<BundleError> for CliError {
    fn from(err: BundleError) -> Self {
        match err {
            BundleError::Io { .. } => CliError::Runtime(err.into()),
            _ => CliError::Usage(err.into()),
        }
    }
}

/// Patch pipeline problems: I/O is runtime, bad files and bad configs are
/// usage errors.
impl From<PatchError> for CliError {
    fn from(err: PatchError) -> Self {
        match err {
            PatchError::Io(_) => CliError::Runtime(err.into()),
            _ => CliError::Usage(err.into()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Shorthand for building a usage error from a message.
macro_rules! usage {
    ($($arg:tt)*) => {
        crate::errors::CliError::Usage(anyhow::anyhow!($($arg)*))
    };
}

pub(crate) use usage;

/// Attaches file-path context to an I/O error, keeping its runtime class.
pub fn io_at(path: &std::path::Path, err: std::io::Error) -> CliError {
    CliError::Runtime(anyhow::Error::new(err).context(format!("{}", path.display())))
}
