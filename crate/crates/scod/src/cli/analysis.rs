//! Loss-distribution analysis over random box pairs.
//!
//! Pair sampler (pair `i` draws from its own stream derived from the seed, so
//! every ratio sees the same pairs):
//! - ground truth: sides uniform in `[0.1, 0.3] * canvas`, center uniform
//!   such that the box stays on the canvas;
//! - difficulty `t ~ U(0, 1)`;
//! - prediction: center offset `N(0, 1) * 0.6 * t` times the ground-truth
//!   side on each axis, sides scaled by `exp(N(0, 1) * 0.15 * t)`.
//!
//! Small `t` gives near-perfect boxes and large `t` gives disjoint ones, so the
//! sample spans IoU in `(0, 1)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::geometry::{aiou_loss, iou, iou_loss, BBox, SqueezeRatio};
use crate::toy::rng_for;

pub const CENTER_NOISE: f64 = 0.6;
pub const SIZE_NOISE: f64 = 0.15;

pub const CSV_HEADER: &str = "iou,loss_iou,loss_aiou,delta_rel,beta";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisRow {
    pub iou: f64,
    pub loss_iou: f64,
    pub loss_aiou: f64,
    /// NaN when `loss_iou` is 0.
    pub delta_rel: f64,
    pub beta: f64,
}

impl AnalysisRow {
    pub fn new(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> Self {
        let loss_iou = iou_loss(pred, gt);
        let loss_aiou = aiou_loss(pred, gt, beta);
        let delta_rel = if loss_iou > 0.0 {
            (loss_aiou - loss_iou) / loss_iou
        } else {
            f64::NAN
        };
        Self {
            iou: iou(pred, gt),
            loss_iou,
            loss_aiou,
            delta_rel,
            beta: beta.get(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt6(self.iou),
            fmt6(self.loss_iou),
            fmt6(self.loss_aiou),
            fmt6(self.delta_rel),
            fmt6(self.beta)
        )
    }
}

/// Fixed six-decimal rendering; NaN prints as `nan`.
pub fn fmt6(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `(pred, gt)` pair number `index`.
pub fn sample_pair(seed: u64, index: u64, canvas: f64) -> (BBox, BBox) {
    let mut rng = rng_for(seed, index);
    let w = canvas * rng.random_range(0.1..0.3);
    let h = canvas * rng.random_range(0.1..0.3);
    let cx = rng.random_range(0.5 * w..canvas - 0.5 * w);
    let cy = rng.random_range(0.5 * h..canvas - 0.5 * h);
    let gt = BBox::from_center(cx, cy, w, h).expect("positive sides");
    let t: f64 = rng.random_range(0.0..1.0);
    let pcx = cx + normal(&mut rng) * CENTER_NOISE * t * w;
    let pcy = cy + normal(&mut rng) * CENTER_NOISE * t * h;
    let pw = w * (normal(&mut rng) * SIZE_NOISE * t).exp();
    let ph = h * (normal(&mut rng) * SIZE_NOISE * t).exp();
    let pred = BBox::from_center(pcx, pcy, pw, ph).expect("positive sides");
    (pred, gt)
}

/// One row per (pair, ratio), sorted by `(beta, iou)`.
pub fn fig4_rows(seed: u64, n_pairs: usize, betas: &[SqueezeRatio], canvas: f64) -> Vec<AnalysisRow> {
    let pairs: Vec<(BBox, BBox)> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| sample_pair(seed, i, canvas))
        .collect();
    let mut rows: Vec<AnalysisRow> = betas
        .iter()
        .flat_map(|&b| pairs.iter().map(move |(p, g)| AnalysisRow::new(p, g, b)))
        .collect();
    rows.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.iou.total_cmp(&b.iou)));
    rows
}

pub fn rows_to_csv(rows: &[AnalysisRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_delta_rel: f64,
}

/// Mean `delta_rel` per IoU decile `[k/10, (k+1)/10)` (the last bin includes 1),
/// keeping bins with at least `min_count` defined samples.
pub fn decile_bins(rows: &[AnalysisRow], min_count: usize) -> Vec<Bin> {
    let mut sums = [0.0f64; 10];
    let mut counts = [0usize; 10];
    for r in rows.iter().filter(|r| r.delta_rel.is_finite()) {
        let k = ((r.iou * 10.0).floor() as usize).min(9);
        sums[k] += r.delta_rel;
        counts[k] += 1;
    }
    (0..10)
        .filter(|&k| counts[k] >= min_count)
        .map(|k| Bin {
            lo: k as f64 / 10.0,
            hi: (k + 1) as f64 / 10.0,
            count: counts[k],
            mean_delta_rel: sums[k] / counts[k] as f64,
        })
        .collect()
}
