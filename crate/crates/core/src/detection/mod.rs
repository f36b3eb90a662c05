//! Dense single-stage anchor head: anchors, target assignment, losses, decoding and NMS.

pub mod anchors;
pub mod assign;
pub mod boxes;
pub mod head;
pub mod io;
pub mod nms;

pub use anchors::{generate_anchors, AnchorGrid};
pub use assign::{assign_targets, decode, decode_boxes, encode, AnchorLabel, PositiveTarget, TargetAssignment};
pub use boxes::{iou, BBox, Detection, GroundTruth};
pub use head::{detect, DetectionHead, HeadConfig, HeadLoss, HeadOutput};
pub use nms::{nms, score_order};
