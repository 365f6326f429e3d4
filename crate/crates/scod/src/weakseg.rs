//! Weak segmentation targets from box annotations.
//!
//! Each pyramid layer gets an `H x W` label grid: a cell takes the class of the
//! smallest ground-truth box that contains its center and whose area falls in
//! the layer's scale range, and background (0) otherwise. The segmenter output
//! is a per-pixel probability simplex over `N + 1` classes, trained with a
//! pixel-averaged cross-entropy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area, BBox};
use crate::scale_plan::LayerScaleRange;

/// Floor applied to scores before the logarithm in [`scws_loss`].
pub const SCORE_FLOOR: f64 = 1e-12;

/// Tolerance on the per-pixel simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class: u32,
}

/// An annotated image: size, number of foreground classes and its objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: f64,
    height: f64,
    num_classes: usize,
    objects: Vec<GroundTruth>,
}

impl Scene {
    /// Clips every box to the image. Classes must lie in `1..=num_classes`, and
    /// a box that keeps no area inside the image is rejected.
    pub fn new(width: f64, height: f64, num_classes: usize, objects: Vec<GroundTruth>) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "image size {width}x{height} must be positive"
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidScene("num_classes must be >= 1".into()));
        }
        let objects = objects
            .into_iter()
            .enumerate()
            .map(|(i, gt)| {
                if gt.class == 0 || gt.class as usize > num_classes {
                    return Err(Error::InvalidScene(format!(
                        "object {i}: class {} outside 1..={num_classes} (0 is background)",
                        gt.class
                    )));
                }
                let bbox = gt
                    .bbox
                    .clip(width, height)
                    .ok_or_else(|| Error::InvalidScene(format!("object {i}: box has no area inside the image")))?;
                Ok(GroundTruth { bbox, class: gt.class })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            height,
            num_classes,
            objects,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn objects(&self) -> &[GroundTruth] {
        &self.objects
    }
}

/// Integer class map `G` of one layer, row-major, 0 = background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub width: usize,
    pub height: usize,
    pub layer_index: usize,
    pub stride: f64,
    pub labels: Vec<u32>,
}

impl LabelGrid {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Image-space center of feature cell `(x, y)`.
pub fn cell_center(x: usize, y: usize, stride: f64) -> (f64, f64) {
    (stride * (x as f64 + 0.5), stride * (y as f64 + 0.5))
}

/// Grid size a stride needs to cover an image side.
pub fn grid_extent(image_side: f64, stride: f64) -> usize {
    (image_side / stride).ceil().max(1.0) as usize
}

// Index range of cells whose centers may fall in [lo, hi]; callers recheck
// containment exactly, so a one-cell slack on each side is harmless.
fn cell_span(lo: f64, hi: f64, stride: f64, n: usize) -> std::ops::Range<usize> {
    let first = (lo / stride - 0.5).floor() - 1.0;
    let last = (hi / stride - 0.5).ceil() + 1.0;
    let first = first.max(0.0) as usize;
    let last = (last.max(-1.0) + 1.0).min(n as f64) as usize;
    first.min(last)..last
}

/// Weak segmentation labels of one layer.
pub fn generate_labels(
    scene: &Scene,
    range: &LayerScaleRange,
    height: usize,
    width: usize,
    stride: f64,
) -> Result<LabelGrid> {
    if (width as f64) * stride < scene.width() || (height as f64) * stride < scene.height() {
        return Err(Error::GridTooSmall {
            grid_w: width,
            grid_h: height,
            stride,
            image_w: scene.width(),
            image_h: scene.height(),
        });
    }
    // Paint largest first so smaller boxes overwrite; among equal areas the
    // lowest object index is painted last and wins.
    let mut order: Vec<(usize, f64)> = scene
        .objects()
        .iter()
        .enumerate()
        .map(|(i, gt)| (i, area(&gt.bbox)))
        .filter(|(_, a)| range.contains(*a))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
    let painters: Vec<GroundTruth> = order.iter().map(|(i, _)| scene.objects()[*i]).collect();

    let mut labels = vec![0u32; width * height];
    if width > 0 {
        labels.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            let cy = stride * (y as f64 + 0.5);
            for gt in painters.iter().filter(|gt| gt.bbox.y1() <= cy && cy <= gt.bbox.y2()) {
                for x in cell_span(gt.bbox.x1(), gt.bbox.x2(), stride, width) {
                    let (cx, _) = cell_center(x, y, stride);
                    if gt.bbox.contains(cx, cy) {
                        row[x] = gt.class;
                    }
                }
            }
        });
    }
    Ok(LabelGrid {
        width,
        height,
        layer_index: range.layer_index,
        stride,
        labels,
    })
}

/// Dense `(classes, height, width)` array of reals: logits, scores or their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ClassMap {
    pub fn zeros(classes: usize, height: usize, width: usize) -> Self {
        Self {
            classes,
            height,
            width,
            data: vec![0.0; classes * height * width],
        }
    }

    pub fn from_vec(classes: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != classes * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {classes}x{height}x{width} map",
                data.len()
            )));
        }
        Ok(Self {
            classes,
            height,
            width,
            data,
        })
    }

    fn index(&self, c: usize, x: usize, y: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[self.index(c, x, y)]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let i = self.index(c, x, y);
        self.data[i] = v;
    }

    fn pixel(&self, x: usize, y: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.classes).map(move |c| self.get(c, x, y))
    }

    /// Per-pixel softmax over the class axis.
    pub fn softmax(&self) -> ClassMap {
        let mut out = ClassMap::zeros(self.classes, self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let m = self.pixel(x, y).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = self.pixel(x, y).map(|v| (v - m).exp()).sum();
                for c in 0..self.classes {
                    out.set(c, x, y, (self.get(c, x, y) - m).exp() / z);
                }
            }
        }
        out
    }
}

/// Segmenter output `Y`: `N + 1` class probabilities per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    scores: ClassMap,
    logits: Option<ClassMap>,
}

impl ScoreGrid {
    pub fn from_logits(logits: ClassMap) -> Self {
        Self {
            scores: logits.softmax(),
            logits: Some(logits),
        }
    }

    /// Wraps raw scores as given; see [`validate_scores`].
    pub fn from_scores(scores: ClassMap) -> Self {
        Self { scores, logits: None }
    }

    pub fn scores(&self) -> &ClassMap {
        &self.scores
    }

    pub fn logits(&self) -> Option<&ClassMap> {
        self.logits.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.classes.saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelViolation {
    pub x: usize,
    pub y: usize,
    pub sum: f64,
}

/// Pixels breaking the simplex constraint, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub violations: Vec<PixelViolation>,
}

impl ViolationReport {
    pub fn first(&self) -> &PixelViolation {
        &self.violations[0]
    }
}

impl std::fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} pixel(s) off the simplex", self.violations.len())?;
        for v in self.violations.iter().take(8) {
            write!(f, "; ({}, {}) sum {:.9}", v.x, v.y, v.sum)?;
        }
        Ok(())
    }
}

/// Checks every score lies in `[0, 1]` and sums to 1 within [`SIMPLEX_TOL`] per pixel.
pub fn validate_scores(y: &ScoreGrid) -> std::result::Result<(), ViolationReport> {
    let s = &y.scores;
    let mut violations = Vec::new();
    for py in 0..s.height {
        for px in 0..s.width {
            let in_range = s.pixel(px, py).all(|v| (0.0..=1.0).contains(&v));
            let sum: f64 = s.pixel(px, py).sum();
            if !in_range || (sum - 1.0).abs() > SIMPLEX_TOL {
                violations.push(PixelViolation { x: px, y: py, sum });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ViolationReport { violations })
    }
}

fn check_shapes(map: &ClassMap, g: &LabelGrid) -> Result<()> {
    if map.width != g.width || map.height != g.height {
        return Err(Error::ShapeMismatch(format!(
            "scores are {}x{}, labels are {}x{}",
            map.width, map.height, g.width, g.height
        )));
    }
    if map.classes == 0 {
        return Err(Error::ShapeMismatch("score map has no classes".into()));
    }
    if let Some(&bad) = g.labels.iter().find(|&&l| l as usize >= map.classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes: map.classes - 1,
        });
    }
    Ok(())
}

/// Pixel-averaged cross-entropy `-(1/HW) sum ln Y[G_xy, x, y]`, natural log,
/// with scores floored at [`SCORE_FLOOR`]. `y` is expected to pass
/// [`validate_scores`].
pub fn scws_loss(y: &ScoreGrid, g: &LabelGrid) -> Result<f64> {
    let s = &y.scores;
    check_shapes(s, g)?;
    let n = (s.width * s.height) as f64;
    if n == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for py in 0..s.height {
        for px in 0..s.width {
            let c = g.get(px, py) as usize;
            let p = s.get(c, px, py);
            // `f64::max` would swallow a NaN score.
            total -= if p < SCORE_FLOOR { SCORE_FLOOR } else { p }.ln();
        }
    }
    Ok(total / n)
}

/// Gradient of `scws_loss(softmax(logits), g)` with respect to the logits:
/// `(softmax - onehot(G)) / (H W)` per pixel.
pub fn scws_loss_grad(logits: &ClassMap, g: &LabelGrid) -> Result<ClassMap> {
    check_shapes(logits, g)?;
    let mut grad = logits.softmax();
    let n = (logits.width * logits.height) as f64;
    for py in 0..logits.height {
        for px in 0..logits.width {
            let c = g.get(px, py) as usize;
            let v = grad.get(c, px, py);
            grad.set(c, px, py, v - 1.0);
        }
    }
    for v in &mut grad.data {
        *v /= n;
    }
    Ok(grad)
}

/// How per-layer segmentation losses are combined into one term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerReduction {
    #[default]
    Sum,
    Mean,
}

impl LayerReduction {
    pub fn combine(self, losses: &[f64]) -> f64 {
        let sum: f64 = losses.iter().sum();
        match self {
            LayerReduction::Sum => sum,
            LayerReduction::Mean if losses.is_empty() => 0.0,
            LayerReduction::Mean => sum / losses.len() as f64,
        }
    }

    /// Factor applied to each layer's gradient.
    pub fn weight(self, layers: usize) -> f64 {
        match self {
            LayerReduction::Sum => 1.0,
            LayerReduction::Mean => 1.0 / layers.max(1) as f64,
        }
    }
}
