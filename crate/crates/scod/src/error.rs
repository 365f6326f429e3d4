use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): corners must be finite with x1 <= x2 and y1 <= y2")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("squeeze ratio must lie in (0, 1], got {0}")]
    InvalidSqueezeRatio(f64),

    #[error("relative change is undefined when the IoU loss is zero")]
    ZeroIouLoss,

    #[error("invalid anchor configuration: {0}")]
    InvalidAnchorSpec(String),

    #[error("layers are not scale-ordered: layer {layer} has upper bound {upper} <= previous {previous}")]
    UnorderedLayers { layer: usize, upper: f64, previous: f64 },

    #[error("ground-truth box has zero area")]
    ZeroAreaGroundTruth,

    #[error("no scale ranges given")]
    EmptyRanges,

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("grid {grid_w}x{grid_h} at stride {stride} does not cover a {image_w}x{image_h} image")]
    GridTooSmall {
        grid_w: usize,
        grid_h: usize,
        stride: f64,
        image_w: f64,
        image_h: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: usize },

    #[error("match threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },
}
