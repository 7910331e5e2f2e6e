use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaviError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("block {block}: expected {expected}, found {found}")]
    FamilyMismatch {
        block: usize,
        expected: &'static str,
        found: &'static str,
    },

    #[error("block index {index} out of range for {blocks} blocks")]
    BlockIndex { index: usize, blocks: usize },

    #[error("{0} is only defined for two-block models")]
    NotTwoBlock(&'static str),

    #[error("fixed-point iteration stopped after {iterations} sweeps with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("sweep grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CaviError>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> CaviError {
    CaviError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
