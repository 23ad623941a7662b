//! Location-sensitive landmark geometry.
//!
//! Offsets from an anchor point to its landmarks are encoded in a
//! four-component cross-coordinate system and compared with the cross-IoU
//! loss. Around that core sit landmark extraction from polygons (extreme
//! points, contour resampling, keypoint boxes), rasterized mask IoU,
//! keypoint similarity, a fitting harness comparing losses, and COCO-format
//! I/O.

pub mod cross_coord;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod landmarks;
pub mod loss;
pub mod metrics;
pub mod optimize;

pub use cross_coord::{
    decode_offset, encode_offset, landmarks_to_cross, soften_target, AnchorPoint, CrossOffset,
    LandmarkRole, LandmarkSet, OffsetVector,
};
pub use error::{Error, Result};
pub use geometry::{BoundingBox, Point, PolygonContour};
pub use loss::{box_iou, cross_iou, cross_iou_grad, cross_iou_loss, giou, giou_loss, smooth_l1_loss, LossValue};
