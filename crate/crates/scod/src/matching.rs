//! Anchor tiling on feature grids and IoU-based anchor/ground-truth matching.

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::scale_plan::AnchorSpec;
use crate::weakseg::{cell_center, Scene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BBox,
    pub layer_index: usize,
    pub cell_x: usize,
    pub cell_y: usize,
    pub scale: f64,
    pub aspect: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn extend(&mut self, other: AnchorSet) {
        self.anchors.extend(other.anchors);
    }
}

/// Tiles one anchor per (cell, scale, aspect), centered on the cell center,
/// with width `scale * sqrt(aspect)` and height `scale / sqrt(aspect)`.
pub fn generate_anchors(spec: &AnchorSpec, height: usize, width: usize) -> Result<AnchorSet> {
    spec.validate()?;
    let scales = spec.scales();
    let mut anchors = Vec::with_capacity(height * width * scales.len() * spec.aspect_ratios.len());
    for y in 0..height {
        for x in 0..width {
            let (cx, cy) = cell_center(x, y, spec.stride);
            for &scale in &scales {
                for &aspect in &spec.aspect_ratios {
                    let r = aspect.sqrt();
                    anchors.push(Anchor {
                        bbox: BBox::from_center(cx, cy, scale * r, scale / r)?,
                        layer_index: spec.layer_index,
                        cell_x: x,
                        cell_y: y,
                        scale,
                        aspect,
                    });
                }
            }
        }
    }
    Ok(AnchorSet { anchors })
}

/// Per-anchor outcome of [`match_anchors`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Matched ground-truth index, `None` for background.
    pub assignments: Vec<Option<usize>>,
    /// IoU with the assigned ground truth, or with the best one for background anchors.
    pub ious: Vec<f64>,
    /// Whether the anchor was claimed as some ground truth's best anchor.
    pub forced: Vec<bool>,
}

impl MatchResult {
    pub fn matched(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(a, g)| g.map(|g| (a, g)))
    }

    pub fn matched_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }
}

// First index of the maximum; ties keep the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, bv)) if v <= bv => best,
        _ => Some((i, v)),
    })
}

/// Best-anchor-per-ground-truth plus threshold matching.
///
/// Every ground truth first claims its highest-IoU anchor not already claimed
/// by an earlier ground truth. Every other anchor whose best IoU reaches
/// `threshold` is matched to that best ground truth; the rest are background.
pub fn match_anchors(anchors: &AnchorSet, scene: &Scene, threshold: f64) -> Result<MatchResult> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let gts = scene.objects();
    let n = anchors.len();
    let overlaps: Vec<Vec<f64>> = anchors
        .anchors
        .iter()
        .map(|a| gts.iter().map(|g| iou(&a.bbox, &g.bbox)).collect())
        .collect();

    let mut assignments = vec![None; n];
    let mut ious = vec![0.0; n];
    for (a, row) in overlaps.iter().enumerate() {
        if let Some((g, v)) = argmax(row.iter().copied()) {
            ious[a] = v;
            if v >= threshold {
                assignments[a] = Some(g);
            }
        }
    }

    let mut forced = vec![false; n];
    for g in 0..gts.len() {
        let best = argmax(
            overlaps
                .iter()
                .zip(&forced)
                .map(|(row, &f)| if f { f64::NEG_INFINITY } else { row[g] }),
        );
        if let Some((a, v)) = best.filter(|(_, v)| v.is_finite()) {
            forced[a] = true;
            assignments[a] = Some(g);
            ious[a] = v;
        }
    }
    Ok(MatchResult {
        assignments,
        ious,
        forced,
    })
}
