//! Analytic-vs-finite-difference gradient checks for the box loss and the
//! segmentation loss.

use rand::Rng;

use crate::geometry::{
    aiou, aiou_loss_grad, finite_diff_grad, kink_distance, max_relative_error, BBox, BoxGradient, SqueezeRatio,
};
use crate::toy::rng_for;
use crate::weakseg::{scws_loss, scws_loss_grad, ClassMap, LabelGrid, ScoreGrid};

pub const FD_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
/// Configurations closer than this (px, squeezed frame) to a kink are resampled.
pub const KINK_MARGIN: f64 = 1e-3;
/// Denominator floor of the relative error, below FD round-off (~1e-10).
pub const REL_FLOOR: f64 = 1e-6;

pub type BoxGradFn = fn(&BBox, &BBox, SqueezeRatio) -> BoxGradient;

/// Offending sample: index, which check, relative error.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub sample: usize,
    pub check: &'static str,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub samples: usize,
    pub geometry_max_rel_err: f64,
    pub weakseg_max_rel_err: f64,
    pub failures: Vec<Failure>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "gradcheck samples={} geometry_max_rel_err={:.3e} weakseg_max_rel_err={:.3e} tol={:.0e} {}\n",
            self.samples,
            self.geometry_max_rel_err,
            self.weakseg_max_rel_err,
            TOLERANCE,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        for f in &self.failures {
            out.push_str(&format!(
                "  failed sample {} ({}) rel_err={:.3e}\n",
                f.sample, f.check, f.rel_err
            ));
        }
        out
    }
}

fn draw_box(rng: &mut impl Rng) -> BBox {
    let x = rng.random_range(0.0..10.0);
    let y = rng.random_range(0.0..10.0);
    let w = rng.random_range(0.5..5.0);
    let h = rng.random_range(0.5..5.0);
    BBox::new(x, y, x + w, y + h).expect("positive sides")
}

/// Random overlapping pair at least [`KINK_MARGIN`] away from every kink.
pub fn sample_smooth_pair(rng: &mut impl Rng) -> (BBox, BBox, SqueezeRatio) {
    loop {
        let pred = draw_box(rng);
        let gt = draw_box(rng);
        let beta = SqueezeRatio::new(rng.random_range(0.5..=1.0)).expect("in range");
        if aiou(&pred, &gt, beta) > 0.0 && kink_distance(&pred, &gt, beta) > KINK_MARGIN {
            return (pred, gt, beta);
        }
    }
}

pub fn check_geometry(seed: u64, n: usize, grad: BoxGradFn) -> (f64, Vec<Failure>) {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..n {
        let mut rng = rng_for(seed, i as u64);
        let (pred, gt, beta) = sample_smooth_pair(&mut rng);
        let analytic = grad(&pred, &gt, beta);
        let numeric = finite_diff_grad(&pred, &gt, beta, FD_STEP);
        let err = max_relative_error(&analytic, &numeric, REL_FLOOR);
        worst = worst.max(err);
        if err.is_nan() || err >= TOLERANCE {
            failures.push(Failure {
                sample: i,
                check: "aiou_loss",
                rel_err: err,
            });
        }
    }
    (worst, failures)
}

fn random_logits(rng: &mut impl Rng, classes: usize, h: usize, w: usize) -> (ClassMap, LabelGrid) {
    let data = (0..classes * h * w).map(|_| rng.random_range(-3.0..3.0)).collect();
    let logits = ClassMap::from_vec(classes, h, w, data).expect("sized to shape");
    let labels = (0..h * w).map(|_| rng.random_range(0..classes as u32)).collect();
    let grid = LabelGrid {
        width: w,
        height: h,
        layer_index: 1,
        stride: 1.0,
        labels,
    };
    (logits, grid)
}

/// Central differences of `scws_loss(softmax(logits))` against [`scws_loss_grad`].
pub fn scws_grad_error(logits: &ClassMap, labels: &LabelGrid, h: f64) -> f64 {
    let analytic = scws_loss_grad(logits, labels).expect("shapes agree");
    let loss = |m: &ClassMap| scws_loss(&ScoreGrid::from_logits(m.clone()), labels).expect("shapes agree");
    let mut worst: f64 = 0.0;
    let mut probe = logits.clone();
    for i in 0..logits.data.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let lp = loss(&probe);
        probe.data[i] = orig - h;
        let lm = loss(&probe);
        probe.data[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic.data[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(REL_FLOOR));
    }
    worst
}

pub fn check_weakseg(seed: u64, n: usize) -> (f64, Vec<Failure>) {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..n {
        let mut rng = rng_for(seed ^ 0x5eed_5c75, i as u64);
        let (logits, labels) = random_logits(&mut rng, 4, 3, 4);
        let err = scws_grad_error(&logits, &labels, FD_STEP);
        worst = worst.max(err);
        if err.is_nan() || err >= TOLERANCE {
            failures.push(Failure {
                sample: i,
                check: "scws_loss",
                rel_err: err,
            });
        }
    }
    (worst, failures)
}

pub fn run_gradcheck(seed: u64, n: usize, grad: BoxGradFn) -> GradcheckReport {
    let (geometry_max_rel_err, mut failures) = check_geometry(seed, n, grad);
    let (weakseg_max_rel_err, seg_failures) = check_weakseg(seed, n);
    failures.extend(seg_failures);
    GradcheckReport {
        samples: n,
        geometry_max_rel_err,
        weakseg_max_rel_err,
        failures,
    }
}

/// The shipped analytic gradient.
pub fn analytic_grad(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> BoxGradient {
    aiou_loss_grad(pred, gt, beta)
}

/// Negative control: the analytic gradient with its sign flipped.
pub fn sign_flipped_grad(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> BoxGradient {
    let g = aiou_loss_grad(pred, gt, beta);
    BoxGradient {
        d_x1: -g.d_x1,
        d_y1: -g.d_y1,
        d_x2: -g.d_x2,
        d_y2: -g.d_y2,
        at_kink: g.at_kink,
    }
}
