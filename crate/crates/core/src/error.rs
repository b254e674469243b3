use thiserror::Error;

use crate::resonance::ModeIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cutoff {cutoff} exceeds the supported maximum {max}")]
    CutoffTooLarge { cutoff: i64, max: i64 },

    #[error("negative cutoff {0}")]
    NegativeCutoff(i64),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("mode {mode:?} lies outside the cutoff {cutoff}")]
    ModeOutOfRange { mode: ModeIndex, cutoff: i64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("beta = {beta} is outside the valid range ({lo}, {hi}) for dim {dim}")]
    BetaOutOfRange { beta: f64, lo: f64, hi: f64, dim: usize },

    #[error("resonance table cutoff {table} is smaller than the field cutoff {field}")]
    CutoffMismatch { table: i64, field: i64 },

    #[error(
        "lifted buffer needs N_y = {ny} per axis (dim {dim}) and N_s = {ns}, \
         {required} points in total, above the capacity of {capacity}"
    )]
    LiftCapacity {
        ny: usize,
        ns: usize,
        dim: usize,
        required: usize,
        capacity: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value after step {step} (mode index {mode}, x index {index})")]
    NonFinite { step: i64, mode: usize, index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
