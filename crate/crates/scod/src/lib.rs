//! Scale-customized weak-segmentation targets and the squeeze-based adaptive
//! IoU (AIoU) loss for anchor-based detectors.
//!
//! - [`geometry`]: IoU, squeeze, AIoU, losses and their analytic gradients.
//! - [`scale_plan`]: per-layer area ranges derived from anchor sizes.
//! - [`weakseg`]: per-layer pixel labels and the segmentation cross-entropy.
//! - [`matching`]: anchor tiling and IoU matching.
//! - [`toy`]: a small differentiable detector trained by gradient descent.
//! - [`cli`]: file formats and commands behind the `scod` binary.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod scale_plan;
pub mod toy;
pub mod weakseg;

pub use error::{Error, Result};
pub use geometry::{
    aiou, aiou_loss, aiou_loss_grad, area, finite_diff_grad, iou, iou_loss, relative_change, squeeze, BBox,
    BoxGradient, SqueezeRatio,
};
pub use matching::{generate_anchors, match_anchors, Anchor, AnchorSet, MatchResult};
pub use scale_plan::{assign_layer, derive_ranges, label_ranges, AnchorSpec, LayerScaleRange};
pub use weakseg::{
    cell_center, generate_labels, scws_loss, scws_loss_grad, validate_scores, ClassMap, GroundTruth, LabelGrid, Scene,
    ScoreGrid,
};
