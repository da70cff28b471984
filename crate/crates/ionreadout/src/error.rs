//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model validation, numerics and streaming.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model or argument violates a documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A histogram with no occurrences was supplied where mass is required.
    #[error("histogram is empty")]
    EmptyHistogram,

    /// Too few samples, or samples that do not span the required range.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A probability vector could not be extended to the required tail mass.
    #[error("pmf tail mass {remaining:.3e} above tolerance at max_count {max_count}")]
    TailMass { remaining: f64, max_count: usize },

    /// An iterative fit did not converge within the iteration budget.
    #[error("fit did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// A two-tone fit collapsed onto a single frequency.
    #[error("unresolved tones: the two fitted pi-times coincide")]
    UnresolvedTones,

    /// Every histogram bin fell at or below the exclusion floor.
    #[error("all histogram mass excluded by the floor")]
    AllMassExcluded,

    /// The fitted lower extreme is negative (over-subtracted baseline).
    #[error("fitted minimum {minimum:.3} is negative; baseline over-subtracted")]
    NegativeMinimum { minimum: f64 },

    /// A site or binning area does not fit inside the frame.
    #[error("out of frame: {0}")]
    OutOfFrame(String),

    /// Two binning areas overlap.
    #[error("overlapping binning areas: {0}")]
    OverlappingAreas(String),

    /// A streamed frame arrived out of order.
    #[error("out-of-order frame: sequence index {got} after {previous}")]
    OutOfOrderFrame { previous: u64, got: u64 },

    /// The producer side of a stream hung up unexpectedly.
    #[error("frame stream closed unexpectedly")]
    StreamClosed,

    /// Malformed file content (CSV, NDJSON, image header).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
