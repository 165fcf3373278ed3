use thiserror::Error;

/// Errors produced by the witness, encoder, channel and ranking routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewaError {
    #[error("witness universe must contain at least one identifier")]
    EmptyUniverse,
    #[error("witness {id} is outside the universe of size {size}")]
    WitnessOutOfRange { id: u32, size: u32 },
    #[error("witness sets come from different universes ({left} vs {right})")]
    UniverseMismatch { left: u32, right: u32 },
    #[error("operation requires a non-empty witness set")]
    EmptySet,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("overlap {delta} exceeds the smaller set size {max}")]
    OverlapTooLarge { delta: u64, max: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("code lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("no code length up to {limit} met target error {target} (best {best_error} at m = {best_m})")]
    SearchExhausted {
        limit: u64,
        target: f64,
        best_m: u64,
        best_error: f64,
    },
}

pub type Result<T, E = RewaError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> RewaError {
    RewaError::InvalidParameter(msg.into())
}
