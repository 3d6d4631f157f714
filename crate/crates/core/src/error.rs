//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised while building grids, assembling bodies, or running the flow.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {found} values but the grid has {expected} nodes")]
    FieldLength { expected: usize, found: usize },

    #[error("origin not interior: u = {value:e} at node {node}")]
    OriginNotInterior { node: usize, value: f64 },

    #[error("convexity lost: smallest principal radius {min_eig:e} at node {node}")]
    NotConvex { node: usize, min_eig: f64 },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("radial value {s:e} outside the certified domain [{lo:e}, {hi:e}]")]
    OutsideDomain { s: f64, lo: f64, hi: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("{0}")]
    Hypothesis(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
