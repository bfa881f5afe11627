use alloc::string::String;
use core::fmt;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A system description or weight vector is invalid.
    InvalidSystem(String),
    /// An observable is non-finite or otherwise malformed.
    InvalidObservable(String),
    /// Two objects that must live on the same space have different sizes.
    DimensionMismatch { expected: usize, found: usize },
    /// A numeric parameter is outside its admissible range.
    InvalidParameter(String),
    /// A partition is not invariant under the transformation.
    NotInvariant(String),
    /// The estimated cost of a computation exceeds the configured budget.
    BudgetExceeded { estimated: u64, budget: u64 },
    /// A coefficient vector fails the Hermitian symmetry test.
    NonHermitian { index: i64, defect: f64 },
    /// A comparison series has no value at the requested index.
    Coverage { missing: u64 },
    /// A named check is not in the registry.
    UnknownCheck(String),
    /// A scenario lacks an input required by a check.
    Arity(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSystem(m) => write!(f, "invalid system: {m}"),
            Error::InvalidObservable(m) => write!(f, "invalid observable: {m}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::NotInvariant(m) => write!(f, "partition is not invariant: {m}"),
            Error::BudgetExceeded { estimated, budget } => write!(
                f,
                "estimated cost {estimated} exceeds budget {budget}; raise the budget or reduce N, k or the system size"
            ),
            Error::NonHermitian { index, defect } => write!(
                f,
                "coefficients are not Hermitian at index {index} (defect {defect:e})"
            ),
            Error::Coverage { missing } => {
                write!(f, "comparison series has no value at N = {missing}")
            }
            Error::UnknownCheck(name) => write!(f, "unknown check '{name}'"),
            Error::Arity(m) => write!(f, "scenario is missing inputs: {m}"),
        }
    }
}

impl core::error::Error for Error {}
