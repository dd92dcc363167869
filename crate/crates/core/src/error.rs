use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("embedding matrix must have at least one row and one column (got {rows}x{dim})")]
    EmptyMatrix { rows: usize, dim: usize },

    #[error("embedding data length {len} does not match {rows}x{dim}")]
    ShapeMismatch { rows: usize, dim: usize, len: usize },

    #[error("non-finite entry at row {row}")]
    NonFinite { row: usize },

    #[error("row {row} is not unit-norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("zero-norm row {row}")]
    ZeroNorm { row: usize },

    #[error("dim mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("invalid span: {0}")]
    InvalidSpan(String),

    #[error("invalid passage record {id}: {detail}")]
    InvalidRecord { id: String, detail: String },

    #[error("marker mismatch: expected {expected}, got {actual}")]
    MarkerMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support mismatch: student assigns zero probability where teacher has mass")]
    SupportMismatch,

    #[error("not a probability distribution (sum {sum})")]
    NotADistribution { sum: f64 },

    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
}
