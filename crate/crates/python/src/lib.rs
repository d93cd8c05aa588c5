//! Python bindings for the geoscene pipeline.
//!
//! Images cross the boundary as flat row-major float lists plus an
//! `(height, width, channels)` shape. Structured results come back as plain
//! dicts decoded from the library's JSON records.

use std::path::PathBuf;

use geoscene::dataset::coco::{cmd_export_coco, MaskFormat};
use geoscene::dataset::report::{cmd_stats, validate_dataset};
use geoscene::dataset::{cmd_generate, Overrides, Project};
use geoscene::geoloss::arch::{parse_arch, receptive_field, shape_trace, Shape, COLOR_PATH, DISCRIMINATOR, GEOMETRY_PATH, PREDICTOR};
use geoscene::geoloss::{self as gl, ImageTensor, LossWeights};
use geoscene::layoutgen::annotation_cost_for;
use geoscene::Error;
use nalgebra::{Point3, Quaternion, UnitQuaternion};
use pyo3::create_exception;
use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(pygeoscene, BudgetExhausted, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::NotFound { .. } => PyFileNotFoundError::new_err(msg),
        Error::Io { .. } | Error::Image { .. } => PyOSError::new_err(msg),
        Error::BudgetExhausted { .. } => BudgetExhausted::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_obj<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tensor(data: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<ImageTensor> {
    ImageTensor::new(shape.0, shape.1, shape.2, data).map_err(to_py)
}

fn tensors(maps: Vec<Vec<f64>>, shape: (usize, usize, usize)) -> PyResult<Vec<ImageTensor>> {
    maps.into_iter().map(|m| tensor(m, shape)).collect()
}

/// `(d_loss, g_loss)` of the least-squares adversarial objective.
#[pyfunction]
fn lsgan_losses(real: Vec<f64>, fake: Vec<f64>) -> PyResult<(f64, f64)> {
    let (nr, nf) = (real.len(), fake.len());
    gl::lsgan_losses(&tensor(real, (1, nr, 1))?, &tensor(fake, (1, nf, 1))?).map_err(to_py)
}

#[pyfunction]
fn pmse_loss(rough: Vec<f64>, generated: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<f64> {
    gl::pmse_loss(&tensor(rough, shape)?, &tensor(generated, shape)?).map_err(to_py)
}

/// Mean absolute error over a tuple of maps sharing one shape.
#[pyfunction]
fn reconstruction_loss(reconstructed: Vec<Vec<f64>>, target: Vec<Vec<f64>>, shape: (usize, usize, usize)) -> PyResult<f64> {
    let (a, b) = (tensors(reconstructed, shape)?, tensors(target, shape)?);
    let (a, b): (Vec<&ImageTensor>, Vec<&ImageTensor>) = (a.iter().collect(), b.iter().collect());
    gl::reconstruction_loss(&a, &b).map_err(to_py)
}

/// Mean squared error over (seg, normal, depth); `shapes` gives each map's shape.
#[pyfunction]
fn geo_guided_loss(
    predicted: [Vec<f64>; 3],
    gt: [Vec<f64>; 3],
    shapes: [(usize, usize, usize); 3],
) -> PyResult<f64> {
    let mut p = Vec::with_capacity(3);
    let mut g = Vec::with_capacity(3);
    for ((a, b), s) in predicted.into_iter().zip(gt).zip(shapes) {
        p.push(tensor(a, s)?);
        g.push(tensor(b, s)?);
    }
    gl::geo_guided_loss([&p[0], &p[1], &p[2]], [&g[0], &g[1], &g[2]]).map_err(to_py)
}

/// Weighted sum of the four loss terms; weights default to the library defaults.
#[pyfunction]
#[pyo3(signature = (gan, pmse, rec, geo, weights=None))]
fn total_objective(gan: f64, pmse: f64, rec: f64, geo: f64, weights: Option<(f64, f64, f64, f64)>) -> PyResult<f64> {
    let w = match weights {
        Some((gan, pmse, rec, geo)) => LossWeights { gan, pmse, rec, geo },
        None => LossWeights::default(),
    };
    w.validate().map_err(to_py)?;
    Ok(gl::total_objective(gan, pmse, rec, geo, &w))
}

fn arch_text(arch: &str) -> &str {
    match arch {
        "color" => COLOR_PATH,
        "geometry" => GEOMETRY_PATH,
        "predictor" => PREDICTOR,
        "discriminator" => DISCRIMINATOR,
        s => s,
    }
}

/// Receptive field of an architecture string or preset name.
#[pyfunction]
#[pyo3(signature = (arch="discriminator"))]
fn arch_receptive_field(arch: &str) -> PyResult<usize> {
    receptive_field(&parse_arch(arch_text(arch)).map_err(to_py)?).map_err(to_py)
}

/// Output `(height, width, channels)` after each layer.
#[pyfunction]
fn arch_shapes(arch: &str, input: (usize, usize, usize)) -> PyResult<Vec<(usize, usize, usize)>> {
    let spec = parse_arch(arch_text(arch)).map_err(to_py)?;
    let shape = Shape { height: input.0, width: input.1, channels: input.2 };
    Ok(shape_trace(&spec, shape)
        .map_err(to_py)?
        .into_iter()
        .map(|s| (s.height, s.width, s.channels))
        .collect())
}

/// Modeled labeling time in seconds.
#[pyfunction]
fn annotation_cost(models: usize, pairs: usize) -> f64 {
    annotation_cost_for(models, pairs)
}

#[pyfunction]
fn validate(py: Python<'_>, manifest: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    json_obj(py, &validate_dataset(&manifest).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (manifest, verify=false))]
fn stats(py: Python<'_>, manifest: PathBuf, verify: bool) -> PyResult<Bound<'_, PyAny>> {
    json_obj(py, &cmd_stats(&manifest, verify).map_err(to_py)?)
}

/// Writes COCO annotations and returns `(images, annotations)`.
#[pyfunction]
#[pyo3(signature = (manifest, out, polygons=false))]
fn export_coco(manifest: PathBuf, out: PathBuf, polygons: bool) -> PyResult<(usize, usize)> {
    let format = if polygons { MaskFormat::Polygon } else { MaskFormat::Rle };
    let coco = cmd_export_coco(&manifest, &out, format).map_err(to_py)?;
    Ok((coco.images.len(), coco.annotations.len()))
}

/// Writes the bundled demo project into `dir` and returns its config path.
#[pyfunction]
fn write_demo(dir: PathBuf) -> PyResult<PathBuf> {
    geoscene::fixtures::write_demo_project(&dir).map_err(to_py)?;
    Ok(dir.join("config.json"))
}

/// A loaded project: config layers, assets, scene and priors.
#[pyclass(name = "Project", module = "pygeoscene")]
struct PyProject {
    inner: Project,
}

#[pymethods]
impl PyProject {
    #[new]
    #[pyo3(signature = (configs, seed=None, scene=None))]
    fn new(configs: Vec<PathBuf>, seed: Option<u64>, scene: Option<String>) -> PyResult<Self> {
        let overrides = Overrides { seed, scene, ..Overrides::default() };
        Ok(PyProject { inner: Project::open(&configs, &overrides).map_err(to_py)? })
    }

    #[getter]
    fn categories(&self) -> Vec<String> {
        self.inner.kb.categories().map(str::to_string).collect()
    }

    #[getter]
    fn annotation_cost(&self) -> f64 {
        geoscene::layoutgen::annotation_cost(&self.inner.kb)
    }

    /// Pose density of a `(w, x, y, z)` orientation.
    fn pose_density(&self, category: &str, quaternion: (f64, f64, f64, f64)) -> PyResult<f64> {
        let (w, x, y, z) = quaternion;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        self.inner.kb.pose_density(category, &q).map_err(to_py)
    }

    #[pyo3(signature = (category, point, surface=None))]
    fn location_density(&self, category: &str, point: (f64, f64, f64), surface: Option<&str>) -> PyResult<f64> {
        let p = Point3::new(point.0, point.1, point.2);
        self.inner
            .kb
            .location_density(category, &p, surface, &self.inner.scene)
            .map_err(to_py)
    }

    /// Generates and renders `count` samples into `out`; returns the summary.
    /// Raises `BudgetExhausted` after writing the partial manifest.
    fn generate<'py>(&self, py: Python<'py>, count: usize, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let (_, summary) = py.detach(|| cmd_generate(&self.inner, count, &out)).map_err(to_py)?;
        let summary = summary.into_result().map_err(to_py)?;
        json_obj(py, &summary)
    }
}

#[pymodule]
fn pygeoscene(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BudgetExhausted", m.py().get_type::<BudgetExhausted>())?;
    m.add_class::<PyProject>()?;
    m.add_function(wrap_pyfunction!(lsgan_losses, m)?)?;
    m.add_function(wrap_pyfunction!(pmse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_loss, m)?)?;
    m.add_function(wrap_pyfunction!(geo_guided_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_objective, m)?)?;
    m.add_function(wrap_pyfunction!(arch_receptive_field, m)?)?;
    m.add_function(wrap_pyfunction!(arch_shapes, m)?)?;
    m.add_function(wrap_pyfunction!(annotation_cost, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(export_coco, m)?)?;
    m.add_function(wrap_pyfunction!(write_demo, m)?)?;
    Ok(())
}
