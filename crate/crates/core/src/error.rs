use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown view {0}")]
    UnknownView(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("depth {depth} outside [{min}, {max}]")]
    DepthOutOfRange { depth: f64, min: f64, max: f64 },
    #[error("bin index {index} out of range for {bins} bins")]
    BinOutOfRange { index: usize, bins: usize },
    #[error("invalid depth distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("sample at ({u}, {v}) falls outside the grid")]
    InvalidSample { u: f64, v: f64 },
    #[error("plan does not match pyramid: {0}")]
    PlanMismatch(String),
    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("gt index {0} does not exist")]
    DanglingGt(usize),
    #[error("range bands overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingBands(f64, f64, f64, f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed pyramid dump: {0}")]
    MalformedDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
