use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by the library. Contract violations (NaN inputs,
/// out-of-range parameters) are reported here; plain programmer errors such
/// as indexing past an image edge panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth bounds near={near} far={far} (need 0 < near < far, both finite)")]
    InvalidDepthBounds { near: f64, far: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("moment vector contains non-finite components")]
    NonFiniteMoments,

    #[error("biased Hankel matrix is not positive semidefinite; moment bias too small for this input")]
    DegenerateMoments,

    #[error("image dimensions differ: {expected:?} vs {found:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("transmittance reconstruction failed at pixel ({x}, {y})")]
    Resolve {
        x: u32,
        y: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("rank {rank} failed")]
    Rank {
        rank: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("aborted because rank {rank} reported a failure")]
    PeerFailure { rank: usize },

    #[error("segments from different ranks interleave at pixel ({x}, {y}); compositing order is undefined")]
    SegmentOverlap { x: u32, y: u32 },

    #[error("binary swap requires a power-of-two rank count, got {ranks}")]
    PowerOfTwoRequired { ranks: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("benchmark sweep is empty")]
    EmptySweep,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
