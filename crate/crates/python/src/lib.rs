//! Python module `drr`: meshes, cameras, the synthetic shape model, rendering, NGC and registration.
//!
//! Images cross the boundary as lists of rows (`image[y][x]`).

use drr_core::geometry::primitives::{ellipsoid, icosphere};
use drr_core::geometry::{load_mesh, ProjectionCamera, TriangleMesh, Vec3};
use drr_core::image::Image;
use drr_core::pipeline::{render_meshes, RenderSettings};
use drr_core::registration::{register as core_register, GroundTruth, OptimizerConfig, RegistrationProblem};
use drr_core::scenario::{default_settings, Scenario, ViewGeometry};
use drr_core::shapemodel::{PoseShapeParams, ShapeModel as CoreModel};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: drr_core::Error) -> PyErr {
    match e {
        drr_core::Error::NonFiniteLoss { .. } | drr_core::Error::UndefinedCorrelation(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(img: &Image) -> Vec<Vec<f64>> {
    img.data().chunks(img.width()).map(<[f64]>::to_vec).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Image> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("image rows must all have the same length"));
    }
    Image::from_vec(w, h, rows.concat()).map_err(to_py)
}

#[pyclass(name = "Mesh", from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: TriangleMesh,
}

#[pymethods]
impl PyMesh {
    /// OBJ or binary STL.
    #[staticmethod]
    fn load(path: &str, label: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_mesh(path, label).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (center, radius, level=3, label="body"))]
    fn icosphere(center: [f64; 3], radius: f64, level: u32, label: &str) -> Self {
        Self {
            inner: icosphere(Vec3::from(center), radius, level, label),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (center, radii, level=3, label="body"))]
    fn ellipsoid(center: [f64; 3], radii: [f64; 3], level: u32, label: &str) -> Self {
        Self {
            inner: ellipsoid(Vec3::from(center), Vec3::from(radii), level, label),
        }
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices().iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces().to_vec()
    }

    fn signed_volume(&self) -> f64 {
        self.inner.signed_volume()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(label={:?}, vertices={}, faces={})", self.inner.label(), self.inner.num_vertices(), self.inner.num_faces())
    }
}

#[pyclass(name = "Camera", from_py_object)]
#[derive(Clone)]
struct PyCamera {
    inner: ProjectionCamera,
}

#[pymethods]
impl PyCamera {
    /// 3x4 matrix text file plus detector TOML.
    #[staticmethod]
    fn load(matrix_path: &str, detector_path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ProjectionCamera::load(matrix_path, detector_path).map_err(to_py)?,
        })
    }

    /// Source on +z, detector centred on the -z axis.
    #[staticmethod]
    #[pyo3(signature = (source_to_isocenter=300.0, isocenter_to_detector=300.0, width=96, height=96, pitch=2.0))]
    fn view(source_to_isocenter: f64, isocenter_to_detector: f64, width: usize, height: usize, pitch: f64) -> PyResult<Self> {
        let v = ViewGeometry {
            source_to_isocenter,
            isocenter_to_detector,
            width_px: width,
            height_px: height,
            pitch_mm: pitch,
        };
        Ok(Self {
            inner: v.camera().map_err(to_py)?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn source(&self) -> [f64; 3] {
        let s = self.inner.source();
        [s.x, s.y, s.z]
    }
}

#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    #[pyo3(get, set)]
    beta: Vec<f64>,
    /// XYZ Euler angles, radians.
    #[pyo3(get, set)]
    rotation: [f64; 3],
    /// mm
    #[pyo3(get, set)]
    translation: [f64; 3],
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (beta, rotation=[0.0; 3], translation=[0.0; 3]))]
    fn new(beta: Vec<f64>, rotation: [f64; 3], translation: [f64; 3]) -> Self {
        Self { beta, rotation, translation }
    }

    fn __repr__(&self) -> String {
        format!("Params(beta={:?}, rotation={:?}, translation={:?})", self.beta, self.rotation, self.translation)
    }
}

impl PyParams {
    fn core(&self) -> PoseShapeParams {
        PoseShapeParams {
            beta: self.beta.clone(),
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    fn from_core(p: &PoseShapeParams) -> Self {
        Self {
            beta: p.beta.clone(),
            rotation: p.rotation,
            translation: p.translation,
        }
    }
}

#[pyclass(name = "ShapeModel", from_py_object)]
#[derive(Clone)]
struct PyShapeModel {
    inner: CoreModel,
}

#[pymethods]
impl PyShapeModel {
    /// Model archive directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreModel::load(path).map_err(to_py)?,
        })
    }

    /// Built-in two-partition ellipsoid model.
    #[staticmethod]
    fn synthetic() -> PyResult<Self> {
        Ok(Self {
            inner: Scenario::synthetic().map_err(to_py)?.model,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn num_modes(&self) -> usize {
        self.inner.num_modes()
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    fn rest(&self) -> PyParams {
        PyParams::from_core(&PoseShapeParams::rest(self.inner.num_modes()))
    }

    /// One mesh per partition.
    fn instantiate(&self, params: &PyParams) -> PyResult<Vec<PyMesh>> {
        Ok(self
            .inner
            .instantiate(&params.core())
            .map_err(to_py)?
            .into_iter()
            .map(|inner| PyMesh { inner })
            .collect())
    }
}

#[pyclass(name = "Settings", from_py_object)]
#[derive(Clone)]
struct PySettings {
    inner: RenderSettings,
}

#[pymethods]
impl PySettings {
    /// Three-bin spectrum with air, body and bones tables.
    #[staticmethod]
    fn default() -> Self {
        Self { inner: default_settings() }
    }

    /// Spectrum CSV plus `{label: csv path}` attenuation tables.
    #[staticmethod]
    fn load(spectrum: &str, materials: std::collections::BTreeMap<String, String>) -> PyResult<Self> {
        let spectrum = drr_core::compositor::Spectrum::load_csv(spectrum).map_err(to_py)?;
        let mut table = drr_core::compositor::MaterialTable::new();
        for (label, path) in materials {
            table.load_csv(&label, path).map_err(to_py)?;
        }
        Ok(Self {
            inner: RenderSettings::new(spectrum, table),
        })
    }
}

type Rows<T> = Vec<Vec<T>>;

/// Path-length map of one mesh: `(values, valid, repaired)`.
#[pyfunction]
fn distance_map(mesh: &PyMesh, camera: &PyCamera) -> PyResult<(Rows<f64>, Rows<bool>, Rows<bool>)> {
    let map = drr_core::rasterizer::distance_map(&mesh.inner, &camera.inner, drr_core::rasterizer::DEFAULT_CAPACITY).map_err(to_py)?;
    let w = camera.inner.width();
    let masks = |m: &drr_core::image::Mask| m.data().chunks(w).map(<[bool]>::to_vec).collect();
    Ok((rows(&map.values), masks(&map.valid), masks(&map.repaired)))
}

/// Transmission image of a set of labelled meshes.
#[pyfunction]
fn render(meshes: Vec<PyMesh>, camera: &PyCamera, settings: &PySettings) -> PyResult<Vec<Vec<f64>>> {
    let meshes: Vec<TriangleMesh> = meshes.into_iter().map(|m| m.inner).collect();
    Ok(rows(&render_meshes(&meshes, &camera.inner, &settings.inner).map_err(to_py)?.image.image))
}

#[pyfunction]
fn ngc(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    drr_core::registration::ngc(&from_rows(a)?, &from_rows(b)?).map_err(to_py)
}

#[pyfunction]
fn hausdorff(a: &PyMesh, b: &PyMesh) -> PyResult<f64> {
    drr_core::registration::hausdorff_distance(&a.inner, &b.inner).map_err(to_py)
}

/// Fits `model` to `target`; returns `(final params, report JSON)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (model, target, camera, settings, init, truth=None, max_iterations=None))]
fn register(
    py: Python<'_>,
    model: &PyShapeModel,
    target: Vec<Vec<f64>>,
    camera: &PyCamera,
    settings: &PySettings,
    init: &PyParams,
    truth: Option<PyParams>,
    max_iterations: Option<usize>,
) -> PyResult<(PyParams, String)> {
    let target = from_rows(target)?;
    let mut cfg = OptimizerConfig::default();
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    let init = init.core();
    let truth = truth.map(|t| GroundTruth::from_params(&model.inner, &t.core()));
    let report = py
        .detach(|| {
            let problem = RegistrationProblem {
                model: &model.inner,
                target: &target,
                cam: &camera.inner,
                settings: &settings.inner,
            };
            core_register(&problem, &init, &cfg, truth.as_ref())
        })
        .map_err(to_py)?;
    let json = serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((PyParams::from_core(&report.final_params), json))
}

#[pymodule]
fn drr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", drr_core::VERSION)?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyCamera>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyShapeModel>()?;
    m.add_class::<PySettings>()?;
    m.add_function(wrap_pyfunction!(distance_map, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(ngc, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    Ok(())
}
