//! Axis-aligned box geometry: IoU, the squeeze operation, adaptive IoU (AIoU)
//! and the associated losses, with piecewise-analytic gradients.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)` in image pixels. AIoU is
//! the IoU of both boxes after each one is shrunk about its own center by the
//! same ratio `beta`; `beta = 1` reproduces plain IoU bit for bit.

use crate::error::{Error, Result};

/// Axis-aligned rectangle in corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    /// Builds a box from corners. Inverted or non-finite corners are rejected.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 > x2 || y1 > y2 {
            return Err(Error::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from center, width and height.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    // Used by finite-difference probes, which may step a hair past validity.
    pub(crate) fn raw(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn cx(&self) -> f64 {
        0.5 * (self.x1 + self.x2)
    }

    pub fn cy(&self) -> f64 {
        0.5 * (self.y1 + self.y2)
    }

    pub fn w(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn h(&self) -> f64 {
        self.y2 - self.y1
    }

    /// `(cx, cy, w, h)`.
    pub fn center_form(&self) -> [f64; 4] {
        [self.cx(), self.cy(), self.w(), self.h()]
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    /// Closed containment: points on the boundary count as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x1 <= x && x <= self.x2 && self.y1 <= y && y <= self.y2
    }

    /// Moves the box by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::raw(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Scales all coordinates about the origin by `s > 0`.
    pub fn scale(&self, s: f64) -> Self {
        Self::raw(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }

    /// Intersects with `[0, width] x [0, height]`. `None` when nothing of positive
    /// area remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<Self> {
        let x1 = self.x1.clamp(0.0, width);
        let y1 = self.y1.clamp(0.0, height);
        let x2 = self.x2.clamp(0.0, width);
        let y2 = self.y2.clamp(0.0, height);
        (x2 > x1 && y2 > y1).then(|| Self::raw(x1, y1, x2, y2))
    }
}

/// Shrink factor applied to both boxes before computing AIoU.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SqueezeRatio(f64);

impl SqueezeRatio {
    pub const IDENTITY: SqueezeRatio = SqueezeRatio(1.0);

    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta <= 1.0 {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidSqueezeRatio(beta))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for SqueezeRatio {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Gradient of a scalar with respect to the predicted box, held in corner form.
///
/// `at_kink` is set when the configuration sits on a non-differentiable seam
/// (aligned edges, touching boxes); the reported values are then the one-sided
/// derivative for an infinitesimal shrink of the predicted box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxGradient {
    pub d_x1: f64,
    pub d_y1: f64,
    pub d_x2: f64,
    pub d_y2: f64,
    pub at_kink: bool,
}

impl BoxGradient {
    pub fn from_corners(d: [f64; 4]) -> Self {
        Self {
            d_x1: d[0],
            d_y1: d[1],
            d_x2: d[2],
            d_y2: d[3],
            at_kink: false,
        }
    }

    /// Converts a `(cx, cy, w, h)` gradient to corner form.
    pub fn from_center_form(d: [f64; 4]) -> Self {
        let [d_cx, d_cy, d_w, d_h] = d;
        Self::from_corners([0.5 * d_cx - d_w, 0.5 * d_cy - d_h, 0.5 * d_cx + d_w, 0.5 * d_cy + d_h])
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.d_x1, self.d_y1, self.d_x2, self.d_y2]
    }

    /// Partials with respect to `(cx, cy, w, h)`, using x1 = cx - w/2, x2 = cx + w/2.
    pub fn center_form(&self) -> [f64; 4] {
        [
            self.d_x1 + self.d_x2,
            self.d_y1 + self.d_y2,
            0.5 * (self.d_x2 - self.d_x1),
            0.5 * (self.d_y2 - self.d_y1),
        ]
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            d_x1: self.d_x1 * s,
            d_y1: self.d_y1 * s,
            d_x2: self.d_x2 * s,
            d_y2: self.d_y2 * s,
            at_kink: self.at_kink,
        }
    }
}

pub fn area(b: &BBox) -> f64 {
    (b.x2 - b.x1) * (b.y2 - b.y1)
}

fn intersection_sides(a: &BBox, b: &BBox) -> (f64, f64) {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    (iw, ih)
}

/// Intersection over union. Two zero-area boxes give 0 rather than NaN.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (iw, ih) = intersection_sides(a, b);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Shrinks `b` about its own center: width and height become `beta * w`, `beta * h`.
pub fn squeeze(b: &BBox, beta: SqueezeRatio) -> BBox {
    // Written as an inset so beta = 1 returns the input corners exactly.
    let k = 0.5 * (1.0 - beta.get());
    let dx = k * b.w();
    let dy = k * b.h();
    BBox::raw(b.x1 + dx, b.y1 + dy, b.x2 - dx, b.y2 - dy)
}

pub fn aiou(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> f64 {
    iou(&squeeze(pred, beta), &squeeze(gt, beta))
}

pub fn iou_loss(pred: &BBox, gt: &BBox) -> f64 {
    1.0 - iou(pred, gt)
}

pub fn aiou_loss(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> f64 {
    1.0 - aiou(pred, gt, beta)
}

/// `(l_aiou - l_iou) / l_iou`.
pub fn relative_change(l_aiou: f64, l_iou: f64) -> Result<f64> {
    if l_iou <= 0.0 {
        return Err(Error::ZeroIouLoss);
    }
    Ok((l_aiou - l_iou) / l_iou)
}

/// Gradient of `iou(pred, gt)` with respect to the corners of `pred`.
fn iou_grad(pred: &BBox, gt: &BBox) -> BoxGradient {
    let (iw, ih) = intersection_sides(pred, gt);
    if iw < 0.0 || ih < 0.0 {
        return BoxGradient::default();
    }
    if iw == 0.0 || ih == 0.0 {
        // Touching: shrinking the prediction keeps the overlap empty.
        return BoxGradient {
            at_kink: true,
            ..BoxGradient::default()
        };
    }
    let inter = iw * ih;
    let (pw, ph) = (pred.w(), pred.h());
    let union = pw * ph + area(gt) - inter;
    let d_inter = (union + inter) / (union * union);
    let d_area = -inter / (union * union);

    // An edge of the prediction bounds the intersection when it lies inside
    // the ground truth; ties go to the prediction (the shrink side).
    let di_x1 = if pred.x1 >= gt.x1 { -ih } else { 0.0 };
    let di_x2 = if pred.x2 <= gt.x2 { ih } else { 0.0 };
    let di_y1 = if pred.y1 >= gt.y1 { -iw } else { 0.0 };
    let di_y2 = if pred.y2 <= gt.y2 { iw } else { 0.0 };

    let at_kink = pred.x1 == gt.x1 || pred.x2 == gt.x2 || pred.y1 == gt.y1 || pred.y2 == gt.y2;
    BoxGradient {
        d_x1: d_inter * di_x1 - d_area * ph,
        d_y1: d_inter * di_y1 - d_area * pw,
        d_x2: d_inter * di_x2 + d_area * ph,
        d_y2: d_inter * di_y2 + d_area * pw,
        at_kink,
    }
}

/// Analytic gradient of `aiou_loss(pred, gt, beta)` with respect to the
/// predicted box.
///
/// The IoU gradient is taken at the squeezed pair and chained back through the
/// squeeze map, which keeps the center and scales width and height by `beta`.
pub fn aiou_loss_grad(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> BoxGradient {
    let b = beta.get();
    let g = iou_grad(&squeeze(pred, beta), &squeeze(gt, beta)).scaled(-1.0);
    let [d_cx, d_cy, d_w, d_h] = g.center_form();
    BoxGradient {
        at_kink: g.at_kink,
        ..BoxGradient::from_center_form([d_cx, d_cy, b * d_w, b * d_h])
    }
}

/// Central-difference estimate of the `aiou_loss` gradient over the corners of `pred`.
pub fn finite_diff_grad(pred: &BBox, gt: &BBox, beta: SqueezeRatio, h: f64) -> BoxGradient {
    let base = pred.corners();
    let mut d = [0.0; 4];
    for (i, slot) in d.iter_mut().enumerate() {
        let mut plus = base;
        let mut minus = base;
        plus[i] += h;
        minus[i] -= h;
        let lp = aiou_loss(&BBox::raw(plus[0], plus[1], plus[2], plus[3]), gt, beta);
        let lm = aiou_loss(&BBox::raw(minus[0], minus[1], minus[2], minus[3]), gt, beta);
        *slot = (lp - lm) / (2.0 * h);
    }
    BoxGradient::from_corners(d)
}

/// Distance (in squeezed coordinates) to the nearest non-differentiable seam of
/// the AIoU loss: aligned edges or touching boxes.
pub fn kink_distance(pred: &BBox, gt: &BBox, beta: SqueezeRatio) -> f64 {
    let p = squeeze(pred, beta);
    let g = squeeze(gt, beta);
    [
        p.x1 - g.x1,
        p.x2 - g.x2,
        p.y1 - g.y1,
        p.y2 - g.y2,
        p.x2 - g.x1,
        g.x2 - p.x1,
        p.y2 - g.y1,
        g.y2 - p.y1,
    ]
    .into_iter()
    .map(f64::abs)
    .fold(f64::INFINITY, f64::min)
}

/// Component-wise relative error `|a - b| / max(|a|, |b|, floor)`, maximised
/// over the four corner partials.
pub fn max_relative_error(a: &BoxGradient, b: &BoxGradient, floor: f64) -> f64 {
    a.corners()
        .iter()
        .zip(b.corners())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn beta(b: f64) -> SqueezeRatio {
        SqueezeRatio::new(b).unwrap()
    }

    /// Midpoint rasterization of both boxes on a `n x n` grid over `[lo, hi]^2`.
    fn raster_iou(a: &BBox, b: &BBox, lo: f64, hi: f64, n: usize) -> f64 {
        let step = (hi - lo) / n as f64;
        let (mut inter, mut union) = (0usize, 0usize);
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y = lo + (j as f64 + 0.5) * step;
                let (ia, ib) = (a.contains(x, y), b.contains(x, y));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn construction_rejects_inverted() {
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(BBox::new(1.0, 1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&bx(0.0, 0.0, 2.0, 2.0)), 4.0);
        assert_eq!(area(&bx(1.0, 1.0, 1.0, 5.0)), 0.0);
        assert_eq!(area(&bx(4.0, 4.0, 20.0, 20.0)), 256.0);
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        let b = bx(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        // grid of 0.01 px aligns with every edge, so the rasterization is exact
        assert!((raster_iou(&a, &b, 0.0, 3.0, 300) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_iou_is_zero() {
        let p = bx(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn squeeze_examples() {
        let b = bx(3.0, -1.0, 7.5, 2.25);
        assert_eq!(squeeze(&b, SqueezeRatio::IDENTITY), b);
        assert_eq!(squeeze(&bx(0.0, 0.0, 2.0, 2.0), beta(0.5)), bx(0.5, 0.5, 1.5, 1.5));
        let s = squeeze(&bx(1.0, 1.0, 3.0, 5.0), beta(0.8));
        for (got, want) in s.corners().iter().zip([1.2, 1.4, 2.8, 4.6]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn squeeze_ratio_bounds() {
        assert!(SqueezeRatio::new(0.0).is_err());
        assert!(SqueezeRatio::new(1.0001).is_err());
        assert!(SqueezeRatio::new(-0.5).is_err());
        assert!(SqueezeRatio::new(f64::NAN).is_err());
        assert!(SqueezeRatio::new(1.0).is_ok());
    }

    #[test]
    fn aiou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(1.0, 1.0, 3.0, 3.0);
        assert_eq!(aiou(&a, &a, beta(0.3)), 1.0);
        assert_eq!(aiou(&a, &b, SqueezeRatio::IDENTITY), iou(&a, &b));
        let want = 0.36 / 4.76;
        assert!((aiou(&a, &b, beta(0.8)) - want).abs() < 1e-12);
        let sa = bx(0.2, 0.2, 1.8, 1.8);
        let sb = bx(1.2, 1.2, 2.8, 2.8);
        assert!((raster_iou(&sa, &sb, 0.0, 3.0, 1500) - want).abs() < 1e-9);
        assert!((aiou_loss(&a, &b, beta(0.8)) - 0.924_369_747_899).abs() < 1e-9);

        // concentric along both axes: squeezing changes nothing
        let c = bx(0.0, 0.0, 10.0, 10.0);
        let d = bx(-5.0, 4.0, 15.0, 6.0);
        assert!((iou(&c, &d) - 1.0 / 6.0).abs() < 1e-15);
        assert!((aiou(&c, &d, beta(0.5)) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou_loss(&a, &a), 0.0);
        assert_eq!(iou_loss(&a, &bx(5.0, 5.0, 6.0, 6.0)), 1.0);
        assert!((iou_loss(&a, &bx(1.0, 1.0, 3.0, 3.0)) - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(aiou_loss(&a, &a, beta(0.6)), 0.0);
    }

    #[test]
    fn relative_change_examples() {
        assert!((relative_change(0.80, 0.72).unwrap() - 0.111).abs() < 1e-3);
        assert!((relative_change(0.69, 0.61).unwrap() - 0.131).abs() < 1e-3);
        assert!((relative_change(0.49, 0.42).unwrap() - 0.167).abs() < 1e-3);
        assert_eq!(relative_change(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(relative_change(0.1, 0.0), Err(Error::ZeroIouLoss));
    }

    #[test]
    fn grad_hand_example() {
        let p = bx(0.0, 0.0, 2.0, 2.0);
        let g = bx(1.0, 1.0, 3.0, 3.0);
        let grad = aiou_loss_grad(&p, &g, SqueezeRatio::IDENTITY);
        assert!((grad.d_x1 + 2.0 / 49.0).abs() < 1e-15);
        assert!((grad.d_y1 + 2.0 / 49.0).abs() < 1e-15);
        assert!(!grad.at_kink);
        let fd = finite_diff_grad(&p, &g, SqueezeRatio::IDENTITY, 1e-6);
        assert!(max_relative_error(&grad, &fd, 1e-6) < 1e-6);
    }

    #[test]
    fn grad_disjoint_is_zero() {
        let p = bx(0.0, 0.0, 1.0, 1.0);
        let g = bx(5.0, 5.0, 6.0, 6.0);
        let grad = aiou_loss_grad(&p, &g, beta(0.8));
        assert_eq!(grad.corners(), [0.0; 4]);
        assert!(!grad.at_kink);
        assert_eq!(finite_diff_grad(&p, &g, beta(0.8), 1e-6).corners(), [0.0; 4]);
    }

    #[test]
    fn grad_identical_boxes_flags_kink() {
        let p = bx(0.0, 0.0, 2.0, 3.0);
        let grad = aiou_loss_grad(&p, &p, SqueezeRatio::IDENTITY);
        assert!(grad.at_kink);
        // Shrinking the prediction lowers IoU, so the loss rises along x1.
        assert!(grad.d_x1 > 0.0 && grad.d_x2 < 0.0);
        // The symmetric difference straddles the kink: it averages the two sides
        // and so stays within the one-sided magnitudes.
        let fd = finite_diff_grad(&p, &p, SqueezeRatio::IDENTITY, 1e-6);
        for (f, a) in fd.corners().iter().zip(grad.corners()) {
            assert!(f.abs() <= a.abs() + 1e-6);
        }
    }

    #[test]
    fn grad_touching_boxes_flags_kink() {
        let p = bx(0.0, 0.0, 1.0, 1.0);
        let g = bx(1.0, 0.0, 2.0, 1.0);
        let grad = aiou_loss_grad(&p, &g, SqueezeRatio::IDENTITY);
        assert!(grad.at_kink);
        assert_eq!(grad.corners(), [0.0; 4]);
    }

    #[test]
    fn finite_diff_is_second_order() {
        let p = bx(0.3, -0.2, 2.1, 1.7);
        let g = bx(1.0, 0.4, 3.3, 2.9);
        let b = beta(0.8);
        let exact = aiou_loss_grad(&p, &g, b);
        let err = |h: f64| {
            let fd = finite_diff_grad(&p, &g, b, h);
            exact
                .corners()
                .iter()
                .zip(fd.corners())
                .map(|(a, f)| (a - f).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio} (e1 {e1}, e2 {e2})");
    }

    #[test]
    fn center_and_corner_gradients_agree() {
        let g = BoxGradient::from_corners([0.3, -1.2, 0.7, 2.5]);
        let back = BoxGradient::from_center_form(g.center_form());
        for (a, b) in g.corners().iter().zip(back.corners()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.01..40.0f64, 0.01..40.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box(), r in 0.05..1.0f64) {
            let r = beta(r);
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            let (i, ai) = (iou(&a, &b), aiou(&a, &b, r));
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!((0.0..=1.0).contains(&ai));
            prop_assert!(ai <= i + 1e-9);
            prop_assert_eq!(aiou(&a, &b, SqueezeRatio::IDENTITY), i);
        }

        #[test]
        fn squeeze_keeps_center_and_scales_area(b in arb_box(), r in 0.05..1.0f64) {
            let s = squeeze(&b, beta(r));
            prop_assert!((s.cx() - b.cx()).abs() < 1e-12);
            prop_assert!((s.cy() - b.cy()).abs() < 1e-12);
            let want = r * r * area(&b);
            prop_assert!((area(&s) - want).abs() <= 1e-9 * want.max(1e-300));
        }

        #[test]
        fn corner_center_round_trip(b in arb_box()) {
            let [cx, cy, w, h] = b.center_form();
            let back = BBox::from_center(cx, cy, w, h).unwrap();
            for (x, y) in back.corners().iter().zip(b.corners()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }

        #[test]
        fn joint_translation_invariance(
            a in arb_box(), b in arb_box(), dx in -100.0..100.0f64, dy in -100.0..100.0f64,
            r in 0.05..1.0f64,
        ) {
            let r = beta(r);
            let (ta, tb) = (a.translate(dx, dy), b.translate(dx, dy));
            prop_assert!((iou(&a, &b) - iou(&ta, &tb)).abs() < 1e-12);
            prop_assert!((aiou(&a, &b, r) - aiou(&ta, &tb, r)).abs() < 1e-12);
        }

        #[test]
        fn joint_scaling_invariance(a in arb_box(), b in arb_box(), s in 0.1..10.0f64, r in 0.05..1.0f64) {
            let r = beta(r);
            let (sa, sb) = (a.scale(s), b.scale(s));
            let (i, si) = (iou(&a, &b), iou(&sa, &sb));
            prop_assert!((i - si).abs() <= 1e-9 * i.max(1e-12));
            let (ai, sai) = (aiou(&a, &b, r), aiou(&sa, &sb, r));
            prop_assert!((ai - sai).abs() <= 1e-9 * ai.max(1e-12));
        }
    }
}
