use core::fmt;

use crate::memory::ObjectId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Foreground or background half of an object's memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    Foreground,
    Background,
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Class::Foreground => f.write_str("foreground"),
            Class::Background => f.write_str("background"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("degenerate input: {what} row {row} has norm below 1e-12")]
    DegenerateInput { what: &'static str, row: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("invalid {what}: {reason}")]
    InvalidValue {
        what: &'static str,
        reason: &'static str,
    },
    #[error("empty {0} class: total mask mass below epsilon")]
    EmptyClass(Class),
    #[error("basis {basis} has weighted mass {mass:e}, below epsilon")]
    InsufficientMass { basis: usize, mass: f64 },
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("object {0} already exists")]
    DuplicateObject(ObjectId),
}

impl Error {
    /// True for failures caused by the numbers themselves (zero-norm rows,
    /// vanished class mass) rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateInput { .. } | Error::EmptyClass(_) | Error::InsufficientMass { .. }
        )
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
