use thiserror::Error;

pub type Result<T> = std::result::Result<T, GsfaError>;

#[derive(Error, Debug, Clone, PartialEq)]
#[non_exhaustive]
pub enum GsfaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),
    #[error("degenerate feature: weighted variance is {0:e}")]
    DegenerateFeature(f64),
    #[error("degenerate label {index}: weighted variance is {variance:e}")]
    DegenerateLabel { index: usize, variance: f64 },
    #[error("label {index} is linearly dependent on earlier labels (residual variance {variance:e})")]
    DependentLabel { index: usize, variance: f64 },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("graph is inconsistent (max residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("unsupported graph: {0}")]
    UnsupportedGraph(String),
    #[error("vertex {0} has no outgoing edge weight")]
    ZeroRow(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error(
        "covariance matrix is singular: null-space dimension {null_dim}, usable rank {rank}, requested {requested}"
    )]
    Singular { null_dim: usize, rank: usize, requested: usize },
    #[error("architecture error in layer {layer}: {reason}")]
    Architecture { layer: usize, reason: String },
    #[error("node ({layer}, {row}, {col}): {source}")]
    Node { layer: usize, row: usize, col: usize, source: Box<GsfaError> },
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GsfaError {
    fn from(e: std::io::Error) -> Self {
        GsfaError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GsfaError {
    fn from(e: serde_json::Error) -> Self {
        GsfaError::Parse(e.to_string())
    }
}
