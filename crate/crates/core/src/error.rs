use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("integrator diverged near q = {q} (|psi| > {guard:e})")]
    Divergence { q: f64, guard: f64 },

    #[error("{what} is singular at node {node} (q = {q})")]
    Singular {
        what: &'static str,
        node: usize,
        q: f64,
    },

    #[error("degenerate microstate: determinant ad - bc = {det}")]
    DegenerateMicrostate { det: f64 },

    #[error("degenerate curvature: W_EE = {w_ee} at q = {q}")]
    DegenerateCurvature { w_ee: f64, q: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrator error: {0}")]
    Integrator(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
