use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by the fitting, analysis and synthesis routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// A lifted or simulated value was NaN or infinite.
    NonFinite { context: &'static str, row: usize },
    /// The Schur iteration did not converge.
    EigenFailure { condition: f64 },
    /// An eigenvalue cluster has fewer independent eigenvectors than its multiplicity.
    Defective { eigenvalue: (f64, f64), multiplicity: usize },
    /// A complex eigenvalue has no adjacent conjugate partner.
    DanglingComplexEigenvalue { index: usize },
    IllConditioned { what: &'static str, condition: f64 },
    AmbiguousConstantDirection { candidates: Vec<usize> },
    NoConstantDirection,
    /// The interior-point iteration broke down.
    SolverFailure {
        reason: String,
        iterations: usize,
        max_eigenvalue: f64,
    },
    /// A trajectory left the finite range.
    BlowUp { step: usize },
    /// A gain was requested from a result that does not carry one.
    NoGain { status: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch {
                context,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {expected}, found {found}"
            ),
            Error::NonFinite { context, row } => {
                write!(f, "non-finite value in {context} at row {row}")
            }
            Error::EigenFailure { condition } => write!(
                f,
                "eigen-decomposition did not converge (condition number {condition:e})"
            ),
            Error::Defective {
                eigenvalue,
                multiplicity,
            } => write!(
                f,
                "matrix is defective at eigenvalue {}{:+}i (multiplicity {multiplicity})",
                eigenvalue.0, eigenvalue.1
            ),
            Error::DanglingComplexEigenvalue { index } => write!(
                f,
                "complex eigenvalue at position {index} has no adjacent conjugate"
            ),
            Error::IllConditioned { what, condition } => {
                write!(f, "{what} is ill-conditioned (condition number {condition:e})")
            }
            Error::AmbiguousConstantDirection { candidates } => write!(
                f,
                "several eigen-directions look constant: {candidates:?}"
            ),
            Error::NoConstantDirection => {
                write!(f, "dictionary has a constant but no constant eigen-direction was found")
            }
            Error::SolverFailure {
                reason,
                iterations,
                max_eigenvalue,
            } => write!(
                f,
                "interior-point solver failed after {iterations} iterations: {reason} \
                 (last LMI max eigenvalue {max_eigenvalue:e})"
            ),
            Error::BlowUp { step } => write!(f, "trajectory blew up at step {step}"),
            Error::NoGain { status } => write!(f, "no feedback gain for status `{status}`"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
