use thiserror::Error;

pub type Result<T> = std::result::Result<T, WuxingError>;

#[derive(Debug, Error)]
pub enum WuxingError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular parameters: k3 must be non-zero")]
    SingularParameter,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state diverged at neuron {neuron} (t = {time})")]
    Divergence { neuron: usize, time: f64 },

    #[error("fixed point did not settle after {iterations} iterations (residual {residual:e}): {reason}")]
    FixedPointDivergence {
        iterations: usize,
        residual: f64,
        reason: &'static str,
    },

    #[error("topology error at boundary {boundary}: {reason}")]
    Topology { boundary: usize, reason: String },

    #[error("IDX format error at byte offset {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("label {label} at index {index} is outside 0..=9")]
    LabelDomain { index: usize, label: u8 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
