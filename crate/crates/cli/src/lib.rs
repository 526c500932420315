//! Scenario-driven harness behind the `qtraj` binary.
//!
//! Each command loads one scenario file, runs the solvers in `qtraj-core`
//! and writes CSV, JSON and optionally SVG reports to an output directory.

pub mod commands;
pub mod output;
pub mod scenario;
pub mod svg;

use serde::Serialize;

pub use commands::{run, Command, Options, Suite};
pub use scenario::Scenario;

/// Exit status for successful runs.
pub const EXIT_OK: i32 = 0;
/// Exit status for solver failures and failed checks.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for unreadable or invalid input.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Input,
    Solver,
    Verification,
    Output,
}

#[derive(Debug, Clone, thiserror::Error, Serialize)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Input,
            message: message.into(),
        }
    }

    pub fn output(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Output,
            message: message.into(),
        }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Verification,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Input => EXIT_INPUT,
            _ => EXIT_FAILURE,
        }
    }

    /// JSON document written to stderr and `error.json`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            error: &'a CliError,
            exit_code: i32,
        }
        serde_json::to_string_pretty(&Doc {
            error: self,
            exit_code: self.exit_code(),
        })
        .expect("error document serializes")
    }
}

impl From<qtraj_core::Error> for CliError {
    fn from(e: qtraj_core::Error) -> Self {
        use qtraj_core::Error as E;
        let kind = match e {
            E::InvalidInput(_) | E::OutOfRange { .. } | E::DegenerateMicrostate { .. } | E::Domain(_) | E::Io(_) => {
                ErrorKind::Input
            }
            E::Divergence { .. } | E::Singular { .. } | E::DegenerateCurvature { .. } | E::Integrator(_) => {
                ErrorKind::Solver
            }
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

/// Caps the global rayon pool at `QTRAJ_THREADS` when the variable is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QTRAJ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::input(format!("QTRAJ_THREADS must be a positive integer (got `{raw}`)")))?;
    // a pool may already exist when embedded in tests; the cap is then best effort
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
