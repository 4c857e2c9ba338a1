//! Error type shared by the solvers, the simulator, and the analysis helpers.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by the numerical routines.
///
/// Variants carry enough context to report the offending input or the
/// achieved accuracy without holding references into solver state.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a precondition (wrong range, empty input, ...).
    InvalidInput { what: String },
    /// A function evaluation produced NaN or an infinity.
    NonFinite { context: &'static str, at: f64 },
    /// Adaptive quadrature hit its depth limit before reaching the
    /// requested tolerance; `achieved` is the final error estimate.
    QuadratureTolerance { requested: f64, achieved: f64 },
    /// A lookup left the domain covered by a curve or trace.
    RangeExceeded {
        what: String,
        value: f64,
        limit: f64,
    },
    /// An invariant broke during time stepping or the recursion; the index
    /// and abscissa identify the first offending node.
    SolverFailure {
        index: usize,
        at: f64,
        detail: String,
    },
    /// Inconsistent run configuration (policy/model mismatch and the like).
    Config { what: String },
    /// The least-squares design matrix was too close to singular.
    IllConditioned { condition: f64, what: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput { what } => write!(f, "invalid input: {what}"),
            Error::NonFinite { context, at } => {
                write!(f, "non-finite value in {context} at argument {at}")
            }
            Error::QuadratureTolerance {
                requested,
                achieved,
            } => write!(
                f,
                "quadrature did not reach tolerance {requested:.3e} (achieved {achieved:.3e})"
            ),
            Error::RangeExceeded { what, value, limit } => {
                write!(f, "{what}: {value} exceeds supported range (limit {limit})")
            }
            Error::SolverFailure { index, at, detail } => {
                write!(
                    f,
                    "solver failure at node {index} (argument {at}): {detail}"
                )
            }
            Error::Config { what } => write!(f, "configuration error: {what}"),
            Error::IllConditioned { condition, what } => {
                write!(
                    f,
                    "ill-conditioned {what} (condition estimate {condition:.3e})"
                )
            }
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    /// Machine-readable tag used by the CLI to pick exit codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid-input",
            Error::NonFinite { .. } => "non-finite",
            Error::QuadratureTolerance { .. } => "quadrature-tolerance",
            Error::RangeExceeded { .. } => "range-exceeded",
            Error::SolverFailure { .. } => "solver-failure",
            Error::Config { .. } => "config",
            Error::IllConditioned { .. } => "ill-conditioned",
        }
    }
}
