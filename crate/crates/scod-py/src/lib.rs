//! Python bindings for `scod`: box geometry and the AIoU loss, scale ranges,
//! weak segmentation labels and the single-box regression demo.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scod::cli::analysis;
use scod::geometry::{self, BBox, SqueezeRatio};
use scod::scale_plan::{self, AnchorSpec, LayerScaleRange};
use scod::weakseg::{self, ClassMap, GroundTruth, LabelGrid, Scene, ScoreGrid};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ratio(beta: f64) -> PyResult<SqueezeRatio> {
    SqueezeRatio::new(beta).map_err(value_err)
}

/// Axis-aligned box in corner form.
#[pyclass(name = "Box", module = "scod_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyBox {
    inner: BBox,
}

#[pymethods]
impl PyBox {
    #[new]
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> PyResult<Self> {
        BBox::new(x1, y1, x2, y2).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> PyResult<Self> {
        BBox::from_center(cx, cy, w, h)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn x1(&self) -> f64 {
        self.inner.x1()
    }

    #[getter]
    fn y1(&self) -> f64 {
        self.inner.y1()
    }

    #[getter]
    fn x2(&self) -> f64 {
        self.inner.x2()
    }

    #[getter]
    fn y2(&self) -> f64 {
        self.inner.y2()
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.inner.cx()
    }

    #[getter]
    fn cy(&self) -> f64 {
        self.inner.cy()
    }

    #[getter]
    fn w(&self) -> f64 {
        self.inner.w()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn corners(&self) -> (f64, f64, f64, f64) {
        let [a, b, c, d] = self.inner.corners();
        (a, b, c, d)
    }

    fn __repr__(&self) -> String {
        let [a, b, c, d] = self.inner.corners();
        format!("Box({a}, {b}, {c}, {d})")
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[pyfunction]
fn iou(a: PyBox, b: PyBox) -> f64 {
    geometry::iou(&a.inner, &b.inner)
}

#[pyfunction]
fn aiou(pred: PyBox, gt: PyBox, beta: f64) -> PyResult<f64> {
    Ok(geometry::aiou(&pred.inner, &gt.inner, ratio(beta)?))
}

#[pyfunction]
fn iou_loss(pred: PyBox, gt: PyBox) -> f64 {
    geometry::iou_loss(&pred.inner, &gt.inner)
}

#[pyfunction]
fn aiou_loss(pred: PyBox, gt: PyBox, beta: f64) -> PyResult<f64> {
    Ok(geometry::aiou_loss(&pred.inner, &gt.inner, ratio(beta)?))
}

#[pyfunction]
fn squeeze(b: PyBox, beta: f64) -> PyResult<PyBox> {
    Ok(PyBox {
        inner: geometry::squeeze(&b.inner, ratio(beta)?),
    })
}

#[pyfunction]
fn relative_change(l_aiou: f64, l_iou: f64) -> PyResult<f64> {
    geometry::relative_change(l_aiou, l_iou).map_err(value_err)
}

fn gradient_dict<'py>(py: Python<'py>, g: &geometry::BoxGradient) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let [a, b, c, e] = g.corners();
    d.set_item("corners", (a, b, c, e))?;
    let [cx, cy, w, h] = g.center_form();
    d.set_item("center", (cx, cy, w, h))?;
    d.set_item("at_kink", g.at_kink)?;
    Ok(d)
}

/// Analytic AIoU-loss gradient of `pred`: dict with `corners`
/// (x1, y1, x2, y2), `center` (cx, cy, w, h) and `at_kink`.
#[pyfunction]
fn aiou_loss_grad<'py>(py: Python<'py>, pred: PyBox, gt: PyBox, beta: f64) -> PyResult<Bound<'py, PyDict>> {
    gradient_dict(py, &geometry::aiou_loss_grad(&pred.inner, &gt.inner, ratio(beta)?))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, beta, h = 1e-6))]
fn finite_diff_grad<'py>(py: Python<'py>, pred: PyBox, gt: PyBox, beta: f64, h: f64) -> PyResult<Bound<'py, PyDict>> {
    if h.is_nan() || h <= 0.0 {
        return Err(PyValueError::new_err("h must be positive"));
    }
    gradient_dict(py, &geometry::finite_diff_grad(&pred.inner, &gt.inner, ratio(beta)?, h))
}

/// Area ranges from `(a_min, a_max, stride)` per layer, bottom layer first.
/// Returns `(layer_index, s_l, s_h)` tuples.
#[pyfunction]
fn derive_ranges(layers: Vec<(f64, f64, f64)>) -> PyResult<Vec<(usize, f64, f64)>> {
    let specs: Vec<AnchorSpec> = layers
        .iter()
        .enumerate()
        .map(|(i, &(a_min, a_max, stride))| AnchorSpec {
            layer_index: i + 1,
            a_min,
            a_max,
            stride,
            aspect_ratios: vec![1.0],
        })
        .collect();
    let ranges = scale_plan::derive_ranges(&specs).map_err(value_err)?;
    Ok(ranges.iter().map(|r| (r.layer_index, r.s_l, r.s_h)).collect())
}

fn to_ranges(ranges: &[(usize, f64, f64)]) -> Vec<LayerScaleRange> {
    ranges
        .iter()
        .map(|&(layer_index, s_l, s_h)| LayerScaleRange { layer_index, s_l, s_h })
        .collect()
}

#[pyfunction]
fn assign_layer(gt: PyBox, ranges: Vec<(usize, f64, f64)>) -> PyResult<usize> {
    scale_plan::assign_layer(&gt.inner, &to_ranges(&ranges)).map_err(value_err)
}

/// Label grid (rows of class ids) for one layer.
#[pyfunction]
#[pyo3(signature = (width, height, num_classes, objects, layer_range, grid_h, grid_w, stride))]
#[allow(clippy::too_many_arguments)]
fn generate_labels(
    width: f64,
    height: f64,
    num_classes: usize,
    objects: Vec<(PyBox, u32)>,
    layer_range: (usize, f64, f64),
    grid_h: usize,
    grid_w: usize,
    stride: f64,
) -> PyResult<Vec<Vec<u32>>> {
    let objects = objects
        .into_iter()
        .map(|(b, class)| GroundTruth { bbox: b.inner, class })
        .collect();
    let scene = Scene::new(width, height, num_classes, objects).map_err(value_err)?;
    let range = to_ranges(&[layer_range])[0];
    let grid = weakseg::generate_labels(&scene, &range, grid_h, grid_w, stride).map_err(value_err)?;
    Ok(grid.labels.chunks(grid_w.max(1)).map(<[u32]>::to_vec).collect())
}

fn nested_to_map(scores: &[Vec<Vec<f64>>]) -> PyResult<ClassMap> {
    let classes = scores.len();
    let height = scores.first().map_or(0, Vec::len);
    let width = scores.first().and_then(|c| c.first()).map_or(0, Vec::len);
    let data: Vec<f64> = scores.iter().flatten().flatten().copied().collect();
    ClassMap::from_vec(classes, height, width, data).map_err(value_err)
}

fn labels_grid(labels: &[Vec<u32>]) -> LabelGrid {
    LabelGrid {
        width: labels.first().map_or(0, Vec::len),
        height: labels.len(),
        layer_index: 1,
        stride: 1.0,
        labels: labels.iter().flatten().copied().collect(),
    }
}

/// Pixel-averaged cross-entropy of `scores[c][y][x]` against `labels[y][x]`.
#[pyfunction]
fn scws_loss(scores: Vec<Vec<Vec<f64>>>, labels: Vec<Vec<u32>>) -> PyResult<f64> {
    let y = ScoreGrid::from_scores(nested_to_map(&scores)?);
    if let Err(report) = weakseg::validate_scores(&y) {
        return Err(PyValueError::new_err(report.to_string()));
    }
    weakseg::scws_loss(&y, &labels_grid(&labels)).map_err(value_err)
}

/// Gradient of the segmentation loss with respect to `logits[c][y][x]`.
#[pyfunction]
fn scws_loss_grad(logits: Vec<Vec<Vec<f64>>>, labels: Vec<Vec<u32>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let map = nested_to_map(&logits)?;
    let g = weakseg::scws_loss_grad(&map, &labels_grid(&labels)).map_err(value_err)?;
    Ok(g.data
        .chunks(g.width * g.height)
        .map(|c| c.chunks(g.width).map(<[f64]>::to_vec).collect())
        .collect())
}

type Corners = (f64, f64, f64, f64);

/// Gradient descent on the AIoU loss; returns `(corners, iou, aiou_loss)` per step.
#[pyfunction]
fn box_fit(init: PyBox, gt: PyBox, beta: f64, lr: f64, steps: usize) -> PyResult<Vec<(Corners, f64, f64)>> {
    let traj = scod::toy::box_fit(&init.inner, &gt.inner, ratio(beta)?, lr, steps).map_err(value_err)?;
    Ok(traj
        .iter()
        .map(|s| {
            let [a, b, c, d] = s.bbox.corners();
            ((a, b, c, d), s.iou, s.aiou_loss)
        })
        .collect())
}

type Row = (f64, f64, f64, f64, f64);

/// Seeded box-pair rows `(iou, loss_iou, loss_aiou, delta_rel, beta)`, sorted by (beta, iou).
#[pyfunction]
#[pyo3(signature = (seed, n_pairs, betas, canvas = 100.0))]
fn fig4_rows(seed: u64, n_pairs: usize, betas: Vec<f64>, canvas: f64) -> PyResult<Vec<Row>> {
    let betas = betas.into_iter().map(ratio).collect::<PyResult<Vec<_>>>()?;
    Ok(analysis::fig4_rows(seed, n_pairs, &betas, canvas)
        .iter()
        .map(|r| (r.iou, r.loss_iou, r.loss_aiou, r.delta_rel, r.beta))
        .collect())
}

#[pymodule]
fn scod_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBox>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(aiou, m)?)?;
    m.add_function(wrap_pyfunction!(iou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(aiou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(squeeze, m)?)?;
    m.add_function(wrap_pyfunction!(relative_change, m)?)?;
    m.add_function(wrap_pyfunction!(aiou_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(finite_diff_grad, m)?)?;
    m.add_function(wrap_pyfunction!(derive_ranges, m)?)?;
    m.add_function(wrap_pyfunction!(assign_layer, m)?)?;
    m.add_function(wrap_pyfunction!(generate_labels, m)?)?;
    m.add_function(wrap_pyfunction!(scws_loss, m)?)?;
    m.add_function(wrap_pyfunction!(scws_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(box_fit, m)?)?;
    m.add_function(wrap_pyfunction!(fig4_rows, m)?)?;
    Ok(())
}
