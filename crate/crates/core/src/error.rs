//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix dimensions do not conform.
    Dimension { expected: (usize, usize), got: (usize, usize), what: &'static str },
    /// A matrix required to be invertible is singular to working precision.
    Singular(&'static str),
    /// A matrix required to be positive definite is not.
    NotPositiveDefinite(&'static str),
    /// An iteration failed to converge.
    NotConverged { what: &'static str, iterations: usize },
    /// No positive-definite solution exists for the requested equation.
    Infeasible(String),
    /// A state left the plant's configuration bounds.
    Domain { coordinate: usize, value: f64 },
    /// Bad caller-supplied configuration (missing callbacks, empty regions...).
    Config(String),
    /// Time integration failed (step-size underflow, too many steps).
    Integration { what: String, time: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { expected, got, what } => write!(
                f,
                "dimension mismatch in {what}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::Singular(what) => write!(f, "singular matrix: {what}"),
            Error::NotPositiveDefinite(what) => write!(f, "not positive definite: {what}"),
            Error::NotConverged { what, iterations } => {
                write!(f, "{what} did not converge after {iterations} iterations")
            }
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::Domain { coordinate, value } => {
                write!(f, "configuration coordinate {coordinate} = {value} left its bounds")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Integration { what, time } => {
                write!(f, "integration failure at t = {time}: {what}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
