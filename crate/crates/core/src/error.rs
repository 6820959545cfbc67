use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range (expected {expected})")]
    Parameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{quantity} must be positive but is {value} at pixel ({row}, {col})")]
    Domain {
        quantity: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("u-subproblem is ill-posed: |denominator| = {magnitude:e} at frequency ({p}, {q})")]
    IllPosed { p: usize, q: usize, magnitude: f64 },

    #[error("spectrum is not conjugate symmetric: imaginary residue {residue:e} exceeds {bound:e}")]
    ImaginaryResidue { residue: f64, bound: f64 },

    #[error("non-finite value produced by the {stage} update at iteration {iteration}")]
    NonFinite { iteration: usize, stage: &'static str },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("invalid data: {0}")]
    Data(String),
}

impl Error {
    /// True for failures raised by the numerics rather than by bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllPosed { .. } | Error::ImaginaryResidue { .. } | Error::NonFinite { .. }
        )
    }

    pub(crate) fn parameter(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Parameter { name, value, expected }
    }
}
