//! Per-layer area ranges derived from the anchor configuration, and assignment
//! of ground-truth boxes to pyramid layers by area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area, BBox};

/// Anchor configuration of one pyramid layer. `a_min` and `a_max` are anchor
/// side lengths in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub layer_index: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub stride: f64,
    pub aspect_ratios: Vec<f64>,
}

impl AnchorSpec {
    pub fn new(layer_index: usize, a_min: f64, a_max: f64, stride: f64, aspect_ratios: Vec<f64>) -> Result<Self> {
        let spec = Self {
            layer_index,
            a_min,
            a_max,
            stride,
            aspect_ratios,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAnchorSpec(format!("layer {}: {msg}", self.layer_index)));
        if self.layer_index < 1 {
            return bad("layer index must be >= 1".into());
        }
        if !(self.a_min > 0.0 && self.a_min <= self.a_max && self.a_max.is_finite()) {
            return bad(format!("need 0 < a_min <= a_max, got ({}, {})", self.a_min, self.a_max));
        }
        if !(self.stride >= 1.0 && self.stride.is_finite()) {
            return bad(format!("stride must be >= 1, got {}", self.stride));
        }
        if self.aspect_ratios.is_empty() {
            return bad("at least one aspect ratio is required".into());
        }
        if let Some(r) = self.aspect_ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return bad(format!("aspect ratios must be positive, got {r}"));
        }
        Ok(())
    }

    /// Anchor side lengths tiled on this layer: both ends of `(a_min, a_max)`,
    /// collapsed to one when they coincide.
    pub fn scales(&self) -> Vec<f64> {
        if self.a_min == self.a_max {
            vec![self.a_min]
        } else {
            vec![self.a_min, self.a_max]
        }
    }

    /// Upper area bound `(a_min * a_max + a_max^2) / 2` of this layer.
    pub fn upper_area(&self) -> f64 {
        (self.a_min * self.a_max + self.a_max * self.a_max) / 2.0
    }
}

/// Half-open area interval `[s_l, s_h)` a layer is responsible for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerScaleRange {
    pub layer_index: usize,
    pub s_l: f64,
    pub s_h: f64,
}

impl LayerScaleRange {
    pub fn contains(&self, area: f64) -> bool {
        self.s_l <= area && area < self.s_h
    }
}

/// Checks the per-spec invariants plus ordering: layer indices run 1, 2, ...
/// and both stride and `a_max` increase strictly.
pub fn validate_specs(specs: &[AnchorSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidAnchorSpec("no layers given".into()));
    }
    for (i, spec) in specs.iter().enumerate() {
        spec.validate()?;
        if spec.layer_index != i + 1 {
            return Err(Error::InvalidAnchorSpec(format!(
                "layer indices must run 1..={}, found {} at position {}",
                specs.len(),
                spec.layer_index,
                i + 1
            )));
        }
        if i > 0 {
            let prev = &specs[i - 1];
            if spec.stride <= prev.stride || spec.a_max <= prev.a_max {
                return Err(Error::InvalidAnchorSpec(format!(
                    "layer {} must have larger stride and a_max than layer {}",
                    spec.layer_index, prev.layer_index
                )));
            }
        }
    }
    Ok(())
}

/// Contiguous ranges: `s_1^l = 0`, `s_i^h = (a_min a_max + a_max^2) / 2`,
/// `s_i^l = s_{i-1}^h`.
pub fn derive_ranges(specs: &[AnchorSpec]) -> Result<Vec<LayerScaleRange>> {
    validate_specs(specs)?;
    let mut ranges: Vec<LayerScaleRange> = Vec::with_capacity(specs.len());
    let mut lower = 0.0;
    for spec in specs {
        let upper = spec.upper_area();
        if upper <= lower {
            return Err(Error::UnorderedLayers {
                layer: spec.layer_index,
                upper,
                previous: lower,
            });
        }
        ranges.push(LayerScaleRange {
            layer_index: spec.layer_index,
            s_l: lower,
            s_h: upper,
        });
        lower = upper;
    }
    Ok(ranges)
}

/// Layer index whose range holds the area of `gt`; areas past the last upper
/// bound go to the top layer.
pub fn assign_layer(gt: &BBox, ranges: &[LayerScaleRange]) -> Result<usize> {
    let a = area(gt);
    if a <= 0.0 {
        return Err(Error::ZeroAreaGroundTruth);
    }
    assign_area(a, ranges)
}

/// Ranges for label generation: the top range is opened to infinity so that
/// oversized boxes still label the layer [`assign_layer`] sends them to.
pub fn label_ranges(ranges: &[LayerScaleRange]) -> Vec<LayerScaleRange> {
    let mut out = ranges.to_vec();
    if let Some(top) = out.last_mut() {
        top.s_h = f64::INFINITY;
    }
    out
}

pub fn assign_area(a: f64, ranges: &[LayerScaleRange]) -> Result<usize> {
    let top = ranges.last().ok_or(Error::EmptyRanges)?;
    Ok(ranges.iter().find(|r| r.contains(a)).unwrap_or(top).layer_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(i: usize, a_min: f64, a_max: f64) -> AnchorSpec {
        AnchorSpec::new(i, a_min, a_max, 4.0 * 2f64.powi(i as i32), vec![1.0]).unwrap()
    }

    fn three_layers() -> Vec<AnchorSpec> {
        vec![spec(1, 32.0, 64.0), spec(2, 64.0, 128.0), spec(3, 128.0, 256.0)]
    }

    #[test]
    fn single_layer_range() {
        let r = derive_ranges(&[spec(1, 32.0, 64.0)]).unwrap();
        assert_eq!(
            r,
            vec![LayerScaleRange {
                layer_index: 1,
                s_l: 0.0,
                s_h: 3072.0
            }]
        );
    }

    #[test]
    fn three_layer_ranges() {
        let r = derive_ranges(&three_layers()).unwrap();
        let bounds: Vec<_> = r.iter().map(|r| (r.s_l, r.s_h)).collect();
        assert_eq!(bounds, vec![(0.0, 3072.0), (3072.0, 12288.0), (12288.0, 49152.0)]);
    }

    #[test]
    fn label_ranges_open_the_top() {
        let r = label_ranges(&derive_ranges(&three_layers()).unwrap());
        assert_eq!(r[1].s_h, 12288.0);
        assert!(r[2].contains(1e6));
        let b = BBox::new(0.0, 0.0, 1000.0, 1000.0).unwrap();
        assert_eq!(assign_layer(&b, &r).unwrap(), 3);
    }

    #[test]
    fn equal_sides_collapse_to_square_area() {
        let r = derive_ranges(&[spec(1, 24.0, 24.0)]).unwrap();
        assert_eq!(r[0].s_h, 576.0);
        assert_eq!(spec(1, 24.0, 24.0).scales(), vec![24.0]);
    }

    #[test]
    fn non_increasing_upper_bound_is_rejected() {
        // a_max increases, but a tiny a_min drags the upper area below layer 1's
        let specs = vec![spec(1, 10.0, 10.0), spec(2, 1.0, 10.5)];
        assert!(matches!(
            derive_ranges(&specs),
            Err(Error::UnorderedLayers { layer: 2, .. })
        ));
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(AnchorSpec::new(1, 0.0, 4.0, 8.0, vec![1.0]).is_err());
        assert!(AnchorSpec::new(1, 5.0, 4.0, 8.0, vec![1.0]).is_err());
        assert!(AnchorSpec::new(1, 4.0, 4.0, 0.5, vec![1.0]).is_err());
        assert!(AnchorSpec::new(1, 4.0, 4.0, 8.0, vec![]).is_err());
        assert!(AnchorSpec::new(0, 4.0, 4.0, 8.0, vec![1.0]).is_err());
        assert!(derive_ranges(&[]).is_err());
        let swapped = vec![spec(2, 64.0, 128.0), spec(1, 32.0, 64.0)];
        assert!(derive_ranges(&swapped).is_err());
    }

    #[test]
    fn assignment_examples() {
        let r = derive_ranges(&three_layers()).unwrap();
        let sq = |a: f64| BBox::new(0.0, 0.0, a.sqrt(), a.sqrt()).unwrap();
        assert_eq!(assign_layer(&BBox::new(0.0, 0.0, 50.0, 50.0).unwrap(), &r).unwrap(), 1);
        assert_eq!(assign_layer(&BBox::new(0.0, 0.0, 48.0, 64.0).unwrap(), &r).unwrap(), 2);
        assert_eq!(assign_layer(&sq(1e6), &r).unwrap(), 3);
        assert_eq!(
            assign_layer(&BBox::new(3.0, 3.0, 3.0, 9.0).unwrap(), &r),
            Err(Error::ZeroAreaGroundTruth)
        );
        assert_eq!(assign_area(5.0, &[]), Err(Error::EmptyRanges));
    }

    fn arb_specs() -> impl Strategy<Value = Vec<AnchorSpec>> {
        prop::collection::vec((1.0..3.0f64, 0.2..1.0f64), 1..6).prop_map(|steps| {
            let mut a_max = 4.0;
            steps
                .into_iter()
                .enumerate()
                .map(|(i, (grow, frac))| {
                    a_max *= grow.max(1.01);
                    let a_min = (a_max * frac).max(1.0).min(a_max);
                    AnchorSpec::new(i + 1, a_min, a_max, 2f64.powi(i as i32 + 2), vec![1.0, 2.0]).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ranges_are_contiguous_and_total(specs in arb_specs(), areas in prop::collection::vec(1e-3..1e6f64, 1..20)) {
            // Shrinking a_min can break ordering; those configs must be rejected, not mis-derived.
            let Ok(ranges) = derive_ranges(&specs) else { return Ok(()); };
            prop_assert_eq!(ranges[0].s_l, 0.0);
            for w in ranges.windows(2) {
                prop_assert_eq!(w[1].s_l, w[0].s_h);
                prop_assert!(w[1].s_h > w[1].s_l);
            }
            let mut sorted = areas.clone();
            sorted.sort_by(f64::total_cmp);
            let layers: Vec<_> = sorted.iter().map(|a| assign_area(*a, &ranges).unwrap()).collect();
            for (a, l) in sorted.iter().zip(&layers) {
                let hits = ranges.iter().filter(|r| r.contains(*a)).count();
                prop_assert!(hits <= 1);
                prop_assert!((1..=ranges.len()).contains(l));
            }
            prop_assert!(layers.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
