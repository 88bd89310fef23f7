use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("frame {frame} is {width}x{height}, expected {expected_width}x{expected_height}")]
    DimensionMismatch {
        frame: usize,
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("frame indices are not contiguous: expected {expected}, found {found}")]
    MissingFrame { expected: usize, found: usize },
    #[error("annotation ({x}, {y}) on frame {frame} lies outside the {width}x{height} frame")]
    AnnotationOutOfBounds {
        frame: usize,
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("annotation references frame {frame} but the sequence has {frames} frames")]
    AnnotationFrameOutOfRange { frame: usize, frames: usize },
    #[error("expected {expected} {what}, got {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("frame {0} has no ground-truth mask")]
    MissingGroundTruth(usize),
    #[error("prior filter diverged: {0}")]
    FilterDivergence(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
