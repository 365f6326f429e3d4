//! A small differentiable detector used to exercise the losses end to end.
//!
//! The model has two parts. A per-layer linear classifier maps each cell's
//! feature vector to `N + 1` logits and is trained against that layer's weak
//! segmentation labels. A detection head holds free parameters per anchor:
//! class logits for every anchor and box offsets for every matched anchor.
//! Training minimises
//!
//! ```text
//! L = w_cls * L_cls + w_scws * reduce(L_scws per layer) + w_box * mean(L_AIoU)
//! ```
//!
//! with plain gradient descent on analytic gradients. Features are synthetic:
//! a class prototype for the cell's label plus Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{aiou_loss, aiou_loss_grad, iou, BBox, SqueezeRatio};
use crate::matching::{generate_anchors, match_anchors, Anchor, AnchorSet};
use crate::scale_plan::{derive_ranges, label_ranges, AnchorSpec, LayerScaleRange};
use crate::weakseg::{
    generate_labels, grid_extent, scws_loss, scws_loss_grad, ClassMap, GroundTruth, LabelGrid, LayerReduction, Scene,
    ScoreGrid,
};

/// Mixes a base seed with a sample index into an independent stream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Synthetic scene generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub image_width: f64,
    pub image_height: f64,
    pub num_classes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub feature_dim: usize,
    /// Length of the class prototype in each feature vector.
    pub signal: f64,
    /// Standard deviation of the per-component feature noise.
    pub noise: f64,
    pub layers: Vec<AnchorSpec>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_width: 128.0,
            image_height: 128.0,
            num_classes: 3,
            min_objects: 2,
            max_objects: 4,
            feature_dim: 8,
            signal: 3.0,
            noise: 0.5,
            layers: default_toy_layers(),
        }
    }
}

/// Three layers at strides 8/16/32 with doubling anchor sizes.
pub fn default_toy_layers() -> Vec<AnchorSpec> {
    vec![
        AnchorSpec {
            layer_index: 1,
            a_min: 12.0,
            a_max: 24.0,
            stride: 8.0,
            aspect_ratios: vec![1.0],
        },
        AnchorSpec {
            layer_index: 2,
            a_min: 24.0,
            a_max: 48.0,
            stride: 16.0,
            aspect_ratios: vec![1.0],
        },
        AnchorSpec {
            layer_index: 3,
            a_min: 48.0,
            a_max: 96.0,
            stride: 32.0,
            aspect_ratios: vec![1.0],
        },
    ]
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image size must be positive");
        }
        if self.num_classes == 0 {
            return bad("num_classes must be >= 1");
        }
        if self.min_objects > self.max_objects {
            return bad("min_objects exceeds max_objects");
        }
        if self.feature_dim < self.num_classes + 1 {
            return bad("feature_dim must be at least num_classes + 1");
        }
        if !(self.signal >= 0.0 && self.noise >= 0.0) {
            return bad("signal and noise must be non-negative");
        }
        derive_ranges(&self.layers).map(|_| ())
    }
}

/// Features and labels of one pyramid layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerData {
    pub spec: AnchorSpec,
    pub range: LayerScaleRange,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Row-major cells, `feature_dim` values each.
    pub features: Vec<f64>,
    pub labels: LabelGrid,
}

impl LayerData {
    pub fn cell_feature(&self, cell: usize, dim: usize) -> &[f64] {
        &self.features[cell * dim..(cell + 1) * dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub scene: Scene,
    pub feature_dim: usize,
    pub layers: Vec<LayerData>,
}

// Orthonormal class prototypes: Gaussian draws, then Gram-Schmidt.
fn prototypes(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        for p in &out {
            let dot: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(p).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    out
}

fn sample_object(rng: &mut impl Rng, cfg: &SceneConfig, range: &LayerScaleRange) -> GroundTruth {
    let max_area = cfg.image_width * cfg.image_height;
    let lo = if range.s_l > 0.0 { range.s_l } else { range.s_h / 4.0 };
    let hi = range.s_h.min(max_area);
    let lo = lo.min(hi);
    let area = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let aspect = rng.random_range(-0.5f64..0.5).exp();
    let w = (area * aspect).sqrt().min(cfg.image_width);
    let h = (area / w).min(cfg.image_height);
    let x1 = rng.random_range(0.0..=cfg.image_width - w);
    let y1 = rng.random_range(0.0..=cfg.image_height - h);
    let class = rng.random_range(1..=cfg.num_classes as u32);
    GroundTruth {
        bbox: BBox::raw(x1, y1, x1 + w, y1 + h),
        class,
    }
}

/// Deterministic synthetic scene: objects are drawn layer by layer so their
/// areas cover every layer's range.
pub fn gen_scene(seed: u64, cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let ranges = derive_ranges(&cfg.layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let objects = (0..count)
        .map(|_| {
            let layer = rng.random_range(0..ranges.len());
            sample_object(&mut rng, cfg, &ranges[layer])
        })
        .collect();
    let scene = Scene::new(cfg.image_width, cfg.image_height, cfg.num_classes, objects)?;
    let protos = prototypes(&mut rng, cfg.num_classes + 1, cfg.feature_dim);

    let mut layers = Vec::with_capacity(ranges.len());
    for ((spec, range), paint) in cfg.layers.iter().zip(&ranges).zip(label_ranges(&ranges)) {
        let grid_w = grid_extent(cfg.image_width, spec.stride);
        let grid_h = grid_extent(cfg.image_height, spec.stride);
        let labels = generate_labels(&scene, &paint, grid_h, grid_w, spec.stride)?;
        let mut features = Vec::with_capacity(grid_w * grid_h * cfg.feature_dim);
        for &label in &labels.labels {
            for &p in &protos[label as usize] {
                features.push(cfg.signal * p + cfg.noise * normal(&mut rng));
            }
        }
        layers.push(LayerData {
            spec: spec.clone(),
            range: *range,
            grid_w,
            grid_h,
            features,
            labels,
        });
    }
    Ok(SyntheticScene {
        scene,
        feature_dim: cfg.feature_dim,
        layers,
    })
}

/// Multipliers on the three loss terms; 0 switches a term off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub scws: f64,
    pub box_loss: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 1.0,
            scws: 1.0,
            box_loss: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub beta: SqueezeRatio,
    /// `false` trains the box term with plain IoU loss.
    pub use_aiou: bool,
    pub seed: u64,
    pub match_threshold: f64,
    pub weights: LossWeights,
    pub layer_reduction: LayerReduction,
    /// Keep at most this many background anchors per positive in `L_cls`,
    /// hardest first. `None` uses every anchor.
    pub hard_negative_ratio: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            steps: 200,
            beta: SqueezeRatio::new(0.8).expect("0.8 is a valid ratio"),
            use_aiou: true,
            seed: 0,
            match_threshold: 0.5,
            weights: LossWeights::default(),
            layer_reduction: LayerReduction::Sum,
            hard_negative_ratio: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be >= 0, got {}",
                self.lr
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if !(self.match_threshold > 0.0 && self.match_threshold < 1.0) {
            return Err(Error::InvalidThreshold(self.match_threshold));
        }
        if let Some(r) = self.hard_negative_ratio {
            if r.is_nan() || r < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "hard negative ratio must be >= 0, got {r}"
                )));
            }
        }
        Ok(())
    }

    fn box_ratio(&self) -> SqueezeRatio {
        if self.use_aiou {
            self.beta
        } else {
            SqueezeRatio::IDENTITY
        }
    }
}

/// Decodes `(dcx, dcy, dlog w, dlog h)` offsets relative to an anchor.
pub fn decode(anchor: &BBox, offset: &[f64; 4]) -> BBox {
    let (aw, ah) = (anchor.w(), anchor.h());
    let cx = anchor.cx() + offset[0] * aw;
    let cy = anchor.cy() + offset[1] * ah;
    let w = aw * offset[2].exp();
    let h = ah * offset[3].exp();
    BBox::raw(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
}

/// Offsets that decode `anchor` onto `target`.
pub fn encode(anchor: &BBox, target: &BBox) -> [f64; 4] {
    [
        (target.cx() - anchor.cx()) / anchor.w(),
        (target.cy() - anchor.cy()) / anchor.h(),
        (target.w() / anchor.w()).ln(),
        (target.h() / anchor.h()).ln(),
    ]
}

/// Trainable parameters plus the anchor matching they are bound to.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Per layer, `(N + 1) x D` row-major.
    pub classifiers: Vec<Vec<f64>>,
    pub anchors: Vec<Anchor>,
    /// Class target per anchor, 0 for background.
    pub anchor_targets: Vec<u32>,
    /// Per anchor, `N + 1` logits.
    pub cls_logits: Vec<f64>,
    /// `(anchor index, ground-truth index)` per matched anchor.
    pub matched: Vec<(usize, usize)>,
    /// Box offsets, parallel to `matched`.
    pub offsets: Vec<[f64; 4]>,
}

impl ToyModel {
    /// Zero-initialised model: uniform class scores and boxes equal to their anchors.
    pub fn new(data: &SyntheticScene, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut set = AnchorSet::default();
        for layer in &data.layers {
            set.extend(generate_anchors(&layer.spec, layer.grid_h, layer.grid_w)?);
        }
        let m = match_anchors(&set, &data.scene, cfg.match_threshold)?;
        let objects = data.scene.objects();
        let anchor_targets = m
            .assignments
            .iter()
            .map(|a| a.map_or(0, |g| objects[g].class))
            .collect();
        let matched: Vec<_> = m.matched().collect();
        let classes = data.scene.num_classes() + 1;
        Ok(Self {
            num_classes: data.scene.num_classes(),
            feature_dim: data.feature_dim,
            classifiers: vec![vec![0.0; classes * data.feature_dim]; data.layers.len()],
            cls_logits: vec![0.0; set.len() * classes],
            offsets: vec![[0.0; 4]; matched.len()],
            anchors: set.anchors,
            anchor_targets,
            matched,
        })
    }

    pub fn predicted_box(&self, k: usize) -> BBox {
        decode(&self.anchors[self.matched[k].0].bbox, &self.offsets[k])
    }

    /// All parameters flattened: classifiers, anchor logits, offsets.
    pub fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.classifiers.iter().flatten().copied().collect();
        v.extend_from_slice(&self.cls_logits);
        v.extend(self.offsets.iter().flatten());
        v
    }

    pub fn set_params(&mut self, v: &[f64]) {
        let mut it = v.iter().copied();
        for w in self.classifiers.iter_mut().flatten() {
            *w = it.next().expect("parameter vector too short");
        }
        for w in &mut self.cls_logits {
            *w = it.next().expect("parameter vector too short");
        }
        for w in self.offsets.iter_mut().flatten() {
            *w = it.next().expect("parameter vector too short");
        }
    }
}

/// Unweighted loss terms, the weighted total and the box-fit quality.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    /// Per-layer terms combined with the configured reduction.
    pub scws: f64,
    pub scws_per_layer: Vec<f64>,
    pub box_loss: f64,
    /// Mean IoU of decoded boxes against their ground truths; 0 without matches.
    pub mean_iou: f64,
    /// Set when no anchor is matched and the box term is 0 by convention.
    pub no_matches: bool,
}

fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
    let loss = m + z.ln() - logits[target];
    let mut probs: Vec<f64> = logits.iter().map(|v| (v - m).exp() / z).collect();
    probs[target] -= 1.0;
    (loss, probs)
}

fn layer_logits(model: &ToyModel, layer: usize, data: &LayerData) -> ClassMap {
    let classes = model.num_classes + 1;
    let dim = model.feature_dim;
    let w = &model.classifiers[layer];
    let cells = data.grid_w * data.grid_h;
    let mut out = ClassMap::zeros(classes, data.grid_h, data.grid_w);
    for cell in 0..cells {
        let f = data.cell_feature(cell, dim);
        for c in 0..classes {
            let v: f64 = w[c * dim..(c + 1) * dim].iter().zip(f).map(|(a, b)| a * b).sum();
            out.data[c * cells + cell] = v;
        }
    }
    out
}

fn check_shapes(model: &ToyModel, data: &SyntheticScene) -> Result<()> {
    if model.classifiers.len() != data.layers.len()
        || model.feature_dim != data.feature_dim
        || model.num_classes != data.scene.num_classes()
    {
        return Err(Error::ShapeMismatch("model does not fit this scene".into()));
    }
    Ok(())
}

/// Loss and its gradient with respect to [`ToyModel::params`].
pub fn loss_and_grad(model: &ToyModel, data: &SyntheticScene, cfg: &TrainConfig) -> Result<(LossBreakdown, Vec<f64>)> {
    check_shapes(model, data)?;
    let classes = model.num_classes + 1;
    let dim = model.feature_dim;
    let wts = cfg.weights;

    // Segmentation term.
    let layer_w = cfg.layer_reduction.weight(data.layers.len());
    let mut scws_per_layer = Vec::with_capacity(data.layers.len());
    let mut g_classifiers = Vec::with_capacity(data.layers.len());
    for (l, layer) in data.layers.iter().enumerate() {
        let logits = layer_logits(model, l, layer);
        let grad = scws_loss_grad(&logits, &layer.labels)?;
        scws_per_layer.push(scws_loss(&ScoreGrid::from_logits(logits), &layer.labels)?);
        let cells = layer.grid_w * layer.grid_h;
        let mut gw = vec![0.0; classes * dim];
        for cell in 0..cells {
            let f = layer.cell_feature(cell, dim);
            for c in 0..classes {
                let gl = grad.data[c * cells + cell] * wts.scws * layer_w;
                gw[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(f)
                    .for_each(|(g, x)| *g += gl * x);
            }
        }
        g_classifiers.push(gw);
    }
    let scws = cfg.layer_reduction.combine(&scws_per_layer);

    // Anchor classification term.
    let per_anchor: Vec<(f64, Vec<f64>)> = model
        .cls_logits
        .chunks(classes)
        .zip(&model.anchor_targets)
        .map(|(z, &t)| cross_entropy(z, t as usize))
        .collect();
    let mut selected: Vec<usize> = (0..per_anchor.len())
        .filter(|&a| model.anchor_targets[a] != 0)
        .collect();
    let mut negatives: Vec<usize> = (0..per_anchor.len())
        .filter(|&a| model.anchor_targets[a] == 0)
        .collect();
    if let Some(ratio) = cfg.hard_negative_ratio {
        negatives.sort_by(|a, b| per_anchor[*b].0.total_cmp(&per_anchor[*a].0).then(a.cmp(b)));
        let keep = ((selected.len() as f64) * ratio).ceil() as usize;
        negatives.truncate(keep);
    }
    selected.extend(negatives);
    let mut g_logits = vec![0.0; model.cls_logits.len()];
    let cls = if selected.is_empty() {
        0.0
    } else {
        let n = selected.len() as f64;
        for &a in &selected {
            let g = &per_anchor[a].1;
            g_logits[a * classes..(a + 1) * classes]
                .iter_mut()
                .zip(g)
                .for_each(|(o, v)| *o = wts.cls * v / n);
        }
        selected.iter().map(|&a| per_anchor[a].0).sum::<f64>() / n
    };

    // Box term, over matched anchors.
    let beta = cfg.box_ratio();
    let objects = data.scene.objects();
    let mut g_offsets = vec![[0.0; 4]; model.matched.len()];
    let (mut box_sum, mut iou_sum) = (0.0, 0.0);
    let n_matched = model.matched.len() as f64;
    for (k, &(a, g)) in model.matched.iter().enumerate() {
        let anchor = &model.anchors[a].bbox;
        let pred = decode(anchor, &model.offsets[k]);
        let gt = &objects[g].bbox;
        let loss = aiou_loss(&pred, gt, beta);
        box_sum += loss;
        iou_sum += iou(&pred, gt);
        if loss == 0.0 {
            // already at the minimum
            continue;
        }
        let [d_cx, d_cy, d_w, d_h] = aiou_loss_grad(&pred, gt, beta).center_form();
        let s = wts.box_loss / n_matched;
        g_offsets[k] = [
            s * d_cx * anchor.w(),
            s * d_cy * anchor.h(),
            s * d_w * pred.w(),
            s * d_h * pred.h(),
        ];
    }
    let no_matches = model.matched.is_empty();
    let (box_loss, mean_iou) = if no_matches {
        (0.0, 0.0)
    } else {
        (box_sum / n_matched, iou_sum / n_matched)
    };

    let total = wts.cls * cls + wts.scws * scws + wts.box_loss * box_loss;
    let mut grad: Vec<f64> = g_classifiers.into_iter().flatten().collect();
    grad.extend(g_logits);
    grad.extend(g_offsets.iter().flatten());
    Ok((
        LossBreakdown {
            total,
            cls,
            scws,
            scws_per_layer,
            box_loss,
            mean_iou,
            no_matches,
        },
        grad,
    ))
}

/// Combined objective of the toy detector.
pub fn total_loss(model: &ToyModel, data: &SyntheticScene, cfg: &TrainConfig) -> Result<LossBreakdown> {
    loss_and_grad(model, data, cfg).map(|(l, _)| l)
}

/// Per-step trajectories. Entry `k` is measured before update `k` is applied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub total: Vec<f64>,
    pub cls: Vec<f64>,
    pub scws: Vec<f64>,
    pub box_loss: Vec<f64>,
    pub mean_iou: Vec<f64>,
}

impl TrainReport {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

/// Runs `cfg.steps` plain gradient-descent updates on `model`.
pub fn train(model: &mut ToyModel, data: &SyntheticScene, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport::default();
    let mut params = model.params();
    for step in 0..cfg.steps {
        let (loss, grad) = loss_and_grad(model, data, cfg)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        report.total.push(loss.total);
        report.cls.push(loss.cls);
        report.scws.push(loss.scws);
        report.box_loss.push(loss.box_loss);
        report.mean_iou.push(loss.mean_iou);
        params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= cfg.lr * g);
        model.set_params(&params);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStep {
    pub bbox: BBox,
    pub iou: f64,
    pub aiou_loss: f64,
}

/// Gradient descent on `aiou_loss(box, gt, beta)` over `(cx, cy, ln w, ln h)`.
/// Returns `steps + 1` entries, the first being `init`.
pub fn box_fit(init: &BBox, gt: &BBox, beta: SqueezeRatio, lr: f64, steps: usize) -> Result<Vec<FitStep>> {
    if init.area() <= 0.0 {
        return Err(Error::ZeroAreaGroundTruth);
    }
    let [mut cx, mut cy, w, h] = init.center_form();
    let (mut lw, mut lh) = (w.ln(), h.ln());
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let (w, h) = (lw.exp(), lh.exp());
        let b = BBox::raw(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
        let loss = aiou_loss(&b, gt, beta);
        out.push(FitStep {
            bbox: b,
            iou: iou(&b, gt),
            aiou_loss: loss,
        });
        if step == steps || loss == 0.0 {
            continue;
        }
        let [d_cx, d_cy, d_w, d_h] = aiou_loss_grad(&b, gt, beta).center_form();
        cx -= lr * d_cx;
        cy -= lr * d_cy;
        lw -= lr * d_w * w;
        lh -= lr * d_h * h;
    }
    Ok(out)
}

/// One seeded single-box regression run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub initial_iou: f64,
    pub final_iou: f64,
    /// First step at which IoU reached 0.9.
    pub steps_to_0_9: Option<usize>,
    pub steps_to_0_95: Option<usize>,
}

/// Initial IoU band the convergence trials start from.
pub const TRIAL_START_IOU: (f64, f64) = (0.25, 0.35);

/// Draws a unit-scale ground truth (sides in `[1, 3]`) and an initial box whose
/// IoU with it lies in [`TRIAL_START_IOU`].
pub fn sample_trial_pair(rng: &mut impl Rng) -> (BBox, BBox) {
    let gw = rng.random_range(1.0..3.0);
    let gh = rng.random_range(1.0..3.0);
    let gcx = rng.random_range(-1.0..1.0);
    let gcy = rng.random_range(-1.0..1.0);
    let gt = BBox::raw(gcx - 0.5 * gw, gcy - 0.5 * gh, gcx + 0.5 * gw, gcy + 0.5 * gh);
    loop {
        let w = gw * rng.random_range(-0.7f64..0.7).exp();
        let h = gh * rng.random_range(-0.7f64..0.7).exp();
        let cx = gcx + rng.random_range(-1.0..1.0) * gw;
        let cy = gcy + rng.random_range(-1.0..1.0) * gh;
        let init = BBox::raw(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
        let v = iou(&init, &gt);
        if (TRIAL_START_IOU.0..=TRIAL_START_IOU.1).contains(&v) {
            return (init, gt);
        }
    }
}

pub fn convergence_trial(seed: u64, trial: u64, beta: SqueezeRatio, lr: f64, steps: usize) -> Result<TrialOutcome> {
    let mut rng = rng_for(seed, trial);
    let (init, gt) = sample_trial_pair(&mut rng);
    let traj = box_fit(&init, &gt, beta, lr, steps)?;
    let first = |t: f64| traj.iter().position(|s| s.iou >= t);
    Ok(TrialOutcome {
        initial_iou: traj[0].iou,
        final_iou: traj.last().map_or(0.0, |s| s.iou),
        steps_to_0_9: first(0.9),
        steps_to_0_95: first(0.95),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub trials: usize,
    pub mean_final_iou: f64,
    /// Mean over the trials that reached IoU 0.9; NaN when none did.
    pub mean_steps_to_0_9: f64,
    pub reached_0_9: usize,
}

/// Runs `trials` seeded single-box fits per ratio. Trial `i` uses the same
/// starting pair for every ratio.
pub fn beta_sweep(betas: &[f64], trials: usize, seed: u64, lr: f64, steps: usize) -> Result<Vec<SweepRow>> {
    betas
        .iter()
        .map(|&b| {
            let beta = SqueezeRatio::new(b)?;
            let outcomes = (0..trials as u64)
                .into_par_iter()
                .map(|t| convergence_trial(seed, t, beta, lr, steps))
                .collect::<Result<Vec<_>>>()?;
            let reached: Vec<usize> = outcomes.iter().filter_map(|o| o.steps_to_0_9).collect();
            let mean_final_iou = outcomes.iter().map(|o| o.final_iou).sum::<f64>() / trials.max(1) as f64;
            let mean_steps_to_0_9 = if reached.is_empty() {
                f64::NAN
            } else {
                reached.iter().sum::<usize>() as f64 / reached.len() as f64
            };
            Ok(SweepRow {
                beta: b,
                trials,
                mean_final_iou,
                mean_steps_to_0_9,
                reached_0_9: reached.len(),
            })
        })
        .collect()
}
