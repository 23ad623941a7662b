use thiserror::Error;

/// Errors raised by the geometry, loss, metric and fitting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative cross-offset component {value} at index {index}")]
    NegativeComponent { index: usize, value: f64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("offset is not hard-encoded: both sides of the {axis} axis are nonzero")]
    NotHardEncoded { axis: char },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("landmark count {got} does not match role {role} (expected {expected})")]
    RoleCount {
        role: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("raster grids differ")]
    GridMismatch,
    #[error("no visible keypoints")]
    NoVisibleKeypoints,
    #[error("GIoU supports rectangle targets only: {0}")]
    RectangleOnly(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
