//! Exact arithmetic and linear algebra over prime fields `F_q`.
//!
//! [`FqMatrix`] is the carrier for generator, parity-check, payload, error and syndrome
//! matrices throughout the crate. Binary matrices take a bit-packed path ([`gf2`]) for
//! products, rank and solving; results are identical to the generic path.

mod field;
pub mod gf2;
mod matrix;

pub use field::{FieldOp, FieldSpec};
pub use matrix::FqMatrix;

use thiserror::Error;

/// Why a linear system has no unique solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveFailure {
    /// No solution exists.
    Inconsistent,
    /// Solutions exist but the coefficient matrix has rank below its column count.
    Underdetermined,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("modulus {0} is not prime")]
    NotPrime(u32),
    #[error("division by zero")]
    DivisionByZero,
    #[error("value {value} is not an element of F_{q}")]
    EntryOutOfRange { value: u32, q: u32 },
    #[error("{rows}x{cols} matrix cannot hold {len} entries")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("field mismatch: F_{left} vs F_{right}")]
    FieldMismatch { left: u32, right: u32 },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("no unique solution: {0:?}")]
    NoUniqueSolution(SolveFailure),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
