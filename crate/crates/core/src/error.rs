use thiserror::Error;

/// Errors produced by the alignment library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a rotation (orthogonality residual {residual:.3e}, det {det:.6})")]
    NotARotation { residual: f64, det: f64 },

    #[error("degree {degree} exceeds the supported cap {cap}")]
    DegreeTooLarge { degree: usize, cap: usize },

    #[error("frequency budget {lambda} admits no ball-harmonic index (first eigenvalue is pi)")]
    EmptyTruncation { lambda: f64 },

    #[error("coefficient sets were built on different truncations")]
    TruncationMismatch,

    #[error("degree cutoff {requested} exceeds available degree {available}")]
    CutoffExceedsBlocks { requested: usize, available: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("search window {window} exceeds N/4 = {limit} for grid size {n}")]
    WindowTooLarge { window: usize, limit: usize, n: usize },

    #[error("volume grids differ: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("cannot add noise to a zero-energy signal")]
    ZeroSignal,

    #[error("all step sizes are zero")]
    AllZeroDeltas,

    #[error("unsupported MRC mode {0} (only mode 2, 32-bit float, is supported)")]
    UnsupportedMode(i32),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("volume is not cubic: {0}x{1}x{2}")]
    NonCubic(usize, usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
