//! Python bindings: point clouds, PLY I/O, metrics, the completion model and
//! config resolution.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spinecomp::config::ExperimentConfig;
use spinecomp::geometry::Point3;
use spinecomp::io::{read_ply as read_ply_file, write_ply as write_ply_file, PlyFormat};
use spinecomp::metrics;
use spinecomp::nn::{checkpoint, CompletionModel, ModelConfig};

create_exception!(spinecomp_py, SpinecompError, PyValueError, "Raised for any spinecomp failure; `category` names the kind.");

fn to_py(e: spinecomp::Error) -> PyErr {
    Python::attach(|py| {
        let err = SpinecompError::new_err(e.to_string());
        let _ = err.value(py).setattr("category", e.category());
        err
    })
}

/// A cloud of 3D points with optional per-point integer labels.
#[pyclass(name = "PointCloud", module = "spinecomp_py", from_py_object)]
#[derive(Clone)]
pub struct PyPointCloud {
    inner: spinecomp::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    /// `points` is any sequence of `(x, y, z)` rows, including an `(n, 3)`
    /// numpy array.
    #[new]
    #[pyo3(signature = (points, labels=None))]
    fn new(points: Vec<[f64; 3]>, labels: Option<Vec<u32>>) -> PyResult<Self> {
        let mut inner = spinecomp::PointCloud::new(points);
        if let Some(l) = labels {
            inner = inner.with_labels(l).map_err(to_py)?;
        }
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("PointCloud({} points)", self.inner.len())
    }

    /// Coordinates as a list of `[x, y, z]` rows.
    #[getter]
    fn points(&self) -> Vec<Point3> {
        self.inner.points.clone()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<u32>> {
        self.inner.labels.clone()
    }

    fn bbox_diagonal(&self) -> Option<f64> {
        self.inner.bbox_diagonal()
    }

    fn translated(&self, t: [f64; 3]) -> Self {
        Self {
            inner: self.inner.translated(t),
        }
    }
}

#[pyfunction]
fn read_ply(path: PathBuf) -> PyResult<PyPointCloud> {
    Ok(PyPointCloud {
        inner: read_ply_file(&path).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (path, cloud, binary=true))]
fn write_ply(path: PathBuf, cloud: &PyPointCloud, binary: bool) -> PyResult<()> {
    let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
    write_ply_file(&path, &cloud.inner, format).map_err(to_py)
}

/// Symmetric Chamfer distance on squared distances.
#[pyfunction]
fn chamfer(pred: &PyPointCloud, gt: &PyPointCloud) -> PyResult<f64> {
    Ok(metrics::chamfer(&pred.inner, &gt.inner).map_err(to_py)?.cd)
}

/// Chamfer distance split into the visible (`cd_top`) and occluded
/// (`cd_bottom`) parts relative to `partial`.
#[pyfunction]
#[pyo3(signature = (pred, gt, partial, tau=None))]
fn chamfer_split<'py>(
    py: Python<'py>,
    pred: &PyPointCloud,
    gt: &PyPointCloud,
    partial: &PyPointCloud,
    tau: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let tau = match tau {
        Some(t) => t,
        None => metrics::default_visibility_threshold(&partial.inner).map_err(to_py)?,
    };
    let s = metrics::chamfer_split(&pred.inner, &gt.inner, &partial.inner, tau).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("cd_top", s.cd_top)?;
    d.set_item("cd_bottom", s.cd_bottom)?;
    d.set_item("visible_fraction", s.visible_fraction)?;
    d.set_item("tau", tau)?;
    Ok(d)
}

#[pyfunction]
fn fscore(pred: &PyPointCloud, gt: &PyPointCloud, threshold: f64) -> PyResult<f64> {
    metrics::fscore(&pred.inner, &gt.inner, threshold).map_err(to_py)
}

/// Earth mover's distance between equal-size clouds: exact assignment by
/// default, the auction approximation with `exact=False`.
#[pyfunction]
#[pyo3(signature = (pred, gt, exact=true, epsilon=1e-3))]
fn emd(py: Python<'_>, pred: &PyPointCloud, gt: &PyPointCloud, exact: bool, epsilon: f64) -> PyResult<f64> {
    let (p, g) = (pred.inner.clone(), gt.inner.clone());
    let r = py.detach(move || {
        if exact {
            metrics::emd_exact(&p, &g)
        } else {
            metrics::emd_approx(&p, &g, epsilon)
        }
    });
    Ok(r.map_err(to_py)?.emd)
}

/// Returns `(snr_db, p_signal, p_noise)`.
#[pyfunction]
fn snr(pred: &PyPointCloud, gt: &PyPointCloud) -> PyResult<(f64, f64, f64)> {
    let s = metrics::snr(&pred.inner, &gt.inner).map_err(to_py)?;
    Ok((s.snr_db, s.p_signal, s.p_noise))
}

#[pyfunction]
fn voxel_iou(a: &PyPointCloud, b: &PyPointCloud, voxel_size: f64) -> PyResult<f64> {
    metrics::voxel_iou(&a.inner, &b.inner, voxel_size).map_err(to_py)
}

/// The point completion network.
#[pyclass(name = "CompletionModel", module = "spinecomp_py")]
pub struct PyCompletionModel {
    inner: CompletionModel,
}

#[pymethods]
impl PyCompletionModel {
    /// Fresh model from a preset (`"desk"` or `"full"`).
    #[new]
    #[pyo3(signature = (preset="desk", seed=0))]
    fn new(preset: &str, seed: u64) -> PyResult<Self> {
        let config = match preset {
            "desk" => ModelConfig::desk(),
            "full" => ModelConfig::full(),
            other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
        };
        Ok(Self {
            inner: CompletionModel::new(config, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn n_input(&self) -> usize {
        self.inner.config().n_input
    }

    #[getter]
    fn n_output(&self) -> usize {
        self.inner.config().n_output()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Completes a partial cloud, resampling it to `n_input` points first.
    #[pyo3(signature = (partial, seed=0))]
    fn complete(&self, py: Python<'_>, partial: &PyPointCloud, seed: u64) -> PyResult<PyPointCloud> {
        let model = &self.inner;
        let p = partial.inner.clone();
        let out = py.detach(move || {
            let input = spinecomp::nn::prepare_input(&p, model.config().n_input, seed)?;
            model.complete(&input)
        });
        Ok(PyPointCloud {
            inner: out.map_err(to_py)?,
        })
    }
}

/// Resolves a TOML config file plus `key=value` overrides and returns the
/// fully populated config as TOML text.
#[pyfunction]
#[pyo3(signature = (path=None, overrides=Vec::new()))]
fn resolve_config(path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<String> {
    let cfg = ExperimentConfig::load(path.as_deref(), &overrides).map_err(to_py)?;
    cfg.snapshot().map_err(to_py)
}

#[pymodule]
pub fn spinecomp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpinecompError", m.py().get_type::<SpinecompError>())?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyCompletionModel>()?;
    m.add_function(wrap_pyfunction!(read_ply, m)?)?;
    m.add_function(wrap_pyfunction!(write_ply, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer_split, m)?)?;
    m.add_function(wrap_pyfunction!(fscore, m)?)?;
    m.add_function(wrap_pyfunction!(emd, m)?)?;
    m.add_function(wrap_pyfunction!(snr, m)?)?;
    m.add_function(wrap_pyfunction!(voxel_iou, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    Ok(())
}
