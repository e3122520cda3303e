//! Input parsing, output writing and the exit-code contract.

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Format, Opts};

pub enum CliError {
    /// Rejected by the library; exit code 1.
    Domain(wassopt::Error),
    /// Unreadable or unwritable file; exit code 2.
    Io(String),
    /// Malformed JSON or a document of the wrong shape; exit code 2.
    Parse(String),
    /// Flags that do not fit the command; exit code 2.
    Usage(String),
}

impl From<wassopt::Error> for CliError {
    fn from(e: wassopt::Error) -> Self {
        CliError::Domain(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(e) => write!(f, "{}: {e}", e.code()),
            CliError::Io(msg) => write!(f, "IoError: {msg}"),
            CliError::Parse(msg) => write!(f, "ParseError: {msg}"),
            CliError::Usage(msg) => write!(f, "UsageError: {msg}"),
        }
    }
}

impl CliError {
    pub fn report(&self) -> ExitCode {
        eprintln!("error: {self}");
        match self {
            CliError::Domain(_) => ExitCode::from(1),
            _ => ExitCode::from(2),
        }
    }
}

pub fn serialize_error(e: serde_json::Error) -> CliError {
    CliError::Parse(format!("cannot serialize output: {e}"))
}

pub fn read_input<T: DeserializeOwned>(opts: &Opts) -> Result<T, CliError> {
    let path = opts.input.as_ref().ok_or_else(|| CliError::Usage("missing --in <PATH>".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn json_only(format: Format, what: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("{what} has no CSV output"))),
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub enum Output {
    Text(String),
}

impl Output {
    /// Pretty JSON; floats use the shortest representation that parses
    /// back to the same bits.
    pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<Self, CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(serialize_error)?;
        s.push('\n');
        Ok(Output::Text(s))
    }

    pub fn write(self, path: Option<&Path>) -> Result<(), CliError> {
        let Output::Text(s) = self;
        match path {
            Some(p) => std::fs::write(p, s).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
            None => {
                use std::io::Write;
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(s.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
            }
        }
    }
}

/// Sizes the global rayon pool from `WASSOPT_THREADS` (0 or unset: automatic).
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("WASSOPT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("WASSOPT_THREADS must be a nonnegative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}
