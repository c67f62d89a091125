use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("innovation covariance is not invertible")]
    SingularInnovation,

    #[error("frame index {got} does not follow previous frame {prev}")]
    NonMonotonicFrame { prev: i64, got: i64 },

    #[error("need at least {needed} samples, have {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("sample variance is zero (mean {mean})")]
    DegenerateVariance { mean: f64 },

    #[error("deviation buffer is still warming up")]
    Inactive,

    #[error("target has no detection in frame {frame}")]
    TargetAbsent { frame: i64 },

    #[error("no positive shift keeps the target associated with its track")]
    NoFeasibleLambda,

    #[error("target is not tracked in frame {frame}")]
    TargetNotTracked { frame: i64 },

    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: frame {frame} precedes frame {prev}")]
    NonContiguousFrames { line: usize, frame: i64, prev: i64 },

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("perceived and ground-truth tracks share no frame")]
    NoOverlap,

    #[error("no target trajectory found")]
    NoTarget,

    #[error("safety thresholds are in meters; got a pixel-space deviation")]
    UnitsMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Io(String),
}
