//! Python bindings: clouds are lists of `[x, y, z]`, silhouettes lists of
//! `[x, y]` and latent codes lists of floats.

use std::path::PathBuf;

use latentfit::geometry::{PointCloud3, PointSet2};
use latentfit::inference::{self, InferenceConfig};
use latentfit::masks::{self, RenderFrame};
use latentfit::metrics;
use latentfit::neural::{train_autoencoder as train_autoencoder_impl, Architecture, TrainConfig};
use latentfit::prior::{self, EmConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cloud(points: Vec<[f64; 3]>) -> PyResult<PointCloud3> {
    PointCloud3::new(points).map_err(value_err)
}

fn points2(points: Vec<[f64; 2]>) -> PyResult<PointSet2> {
    PointSet2::new(points).map_err(value_err)
}

/// Object rotation as azimuth, elevation and tilt in radians.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct Pose {
    inner: latentfit::Pose,
}

#[pymethods]
impl Pose {
    #[new]
    #[pyo3(signature = (azimuth=0.0, elevation=0.0, tilt=0.0))]
    fn new(azimuth: f64, elevation: f64, tilt: f64) -> Self {
        Self {
            inner: latentfit::Pose::new(azimuth, elevation, tilt),
        }
    }

    #[staticmethod]
    fn from_degrees(azimuth: f64, elevation: f64, tilt: f64) -> Self {
        Self {
            inner: latentfit::Pose::from_degrees(azimuth, elevation, tilt),
        }
    }

    #[getter]
    fn azimuth(&self) -> f64 {
        self.inner.azimuth
    }

    #[getter]
    fn elevation(&self) -> f64 {
        self.inner.elevation
    }

    #[getter]
    fn tilt(&self) -> f64 {
        self.inner.tilt
    }

    fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        self.inner.rotation_matrix()
    }

    fn __repr__(&self) -> String {
        let [a, e, t] = self.inner.angles().map(f64::to_degrees);
        format!("Pose(azimuth={a:.3}°, elevation={e:.3}°, tilt={t:.3}°)")
    }
}

#[pyclass(frozen)]
struct Autoencoder {
    inner: latentfit::Autoencoder,
}

#[pymethods]
impl Autoencoder {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner =
            latentfit::Autoencoder::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner
            .save(&path)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn version_hash(&self) -> String {
        self.inner.version_hash()
    }

    fn encode(&self, points: Vec<[f64; 3]>) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .encode(&cloud(points)?)
            .map_err(value_err)?
            .into_values())
    }

    fn decode(&self, code: Vec<f64>) -> PyResult<Vec<[f64; 3]>> {
        let code = latentfit::LatentCode::new(code).map_err(value_err)?;
        Ok(self.inner.decode(&code).map_err(value_err)?.into_points())
    }
}

#[pyclass(frozen)]
struct GmmModel {
    inner: latentfit::GmmModel,
}

#[pymethods]
impl GmmModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner =
            latentfit::GmmModel::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner
            .save(&path)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means().to_vec()
    }

    fn nll(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.nll(&x).map_err(value_err)
    }

    fn nll_grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.nll_grad(&x).map_err(value_err)
    }

    fn mahalanobis(&self, k: usize, x: Vec<f64>) -> PyResult<f64> {
        if k >= self.inner.n_components() {
            return Err(PyValueError::new_err(format!("component {k} out of range")));
        }
        self.inner.mahalanobis(k, &x).map_err(value_err)
    }
}

/// Trains the point-cloud autoencoder; every cloud must have the same
/// number of points.
#[pyfunction]
#[pyo3(signature = (clouds, epochs=150, batch_size=16, learning_rate=1e-3, latent_dim=32, seed=0))]
fn train_autoencoder(
    py: Python<'_>,
    clouds: Vec<Vec<[f64; 3]>>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    latent_dim: usize,
    seed: u64,
) -> PyResult<(Autoencoder, Vec<f64>)> {
    let data = clouds
        .into_iter()
        .map(cloud)
        .collect::<PyResult<Vec<_>>>()?;
    let n_points = data.first().map_or(0, PointCloud3::len);
    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        seed,
        architecture: Architecture::desk(latent_dim, n_points),
    };
    let (inner, report) = py
        .detach(|| train_autoencoder_impl(&data, &cfg))
        .map_err(value_err)?;
    Ok((Autoencoder { inner }, report.epoch_losses))
}

/// Fits a full-covariance mixture with `k` components by EM.
#[pyfunction]
#[pyo3(signature = (latents, k, seed=0))]
fn fit_gmm(py: Python<'_>, latents: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<GmmModel> {
    let (inner, _) = py
        .detach(|| prior::fit_gmm(&latents, &EmConfig::with_k(k, seed)))
        .map_err(value_err)?;
    Ok(GmmModel { inner })
}

#[pyclass(frozen, get_all)]
struct Reconstruction {
    code: Vec<f64>,
    pose: Pose,
    cloud: Vec<[f64; 3]>,
    l_sil: f64,
    l_shape: f64,
    best_restart: usize,
    json: String,
}

#[pymethods]
impl Reconstruction {
    fn __repr__(&self) -> String {
        format!(
            "Reconstruction(l_sil={:.6}, l_shape={:.3}, best_restart={})",
            self.l_sil, self.l_shape, self.best_restart
        )
    }
}

/// Optimizes latent code and pose against silhouette samples, one restart
/// per mixture mean. `config` is an optional JSON object overriding the
/// inference defaults.
#[pyfunction]
#[pyo3(signature = (model, gmm, silhouette, config=None, use_prior=true))]
fn reconstruct(
    py: Python<'_>,
    model: &Autoencoder,
    gmm: &GmmModel,
    silhouette: Vec<[f64; 2]>,
    config: Option<&str>,
    use_prior: bool,
) -> PyResult<Reconstruction> {
    let mut cfg: InferenceConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => InferenceConfig::default(),
    };
    cfg.use_prior &= use_prior;
    let sil = points2(silhouette)?;
    let result = py
        .detach(|| inference::reconstruct(&model.inner, &gmm.inner, &sil, &cfg))
        .map_err(value_err)?;
    Ok(Reconstruction {
        code: result.code.values().to_vec(),
        pose: Pose { inner: result.pose },
        cloud: result
            .cloud
            .clone()
            .map(PointCloud3::into_points)
            .unwrap_or_default(),
        l_sil: result.final_terms.sil,
        l_shape: result.final_terms.shape,
        best_restart: result.best_restart,
        json: result.to_json(),
    })
}

#[pyfunction]
fn project(points: Vec<[f64; 3]>, pose: &Pose) -> PyResult<Vec<[f64; 2]>> {
    Ok(latentfit::pose::project(&cloud(points)?, &pose.inner).into_points())
}

#[pyfunction]
fn chamfer3(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> PyResult<f64> {
    metrics::chamfer3(&cloud(a)?, &cloud(b)?).map_err(value_err)
}

#[pyfunction]
fn chamfer2(a: Vec<[f64; 2]>, b: Vec<[f64; 2]>) -> PyResult<f64> {
    metrics::chamfer2(&points2(a)?, &points2(b)?).map_err(value_err)
}

#[pyfunction]
fn emd_approx(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> PyResult<f64> {
    metrics::emd_approx(&cloud(a)?, &cloud(b)?).map_err(value_err)
}

#[pyfunction]
fn emd_exact(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> PyResult<f64> {
    metrics::emd_exact(&cloud(a)?, &cloud(b)?).map_err(value_err)
}

/// Draws `m` foreground pixels of a PGM mask. With `normalized` the samples
/// are centered and scaled to the calibration radius; otherwise they are
/// placed in the render frame used by the synthetic benchmark.
#[pyfunction]
#[pyo3(signature = (path, m, seed=0, normalized=false))]
fn sample_mask(path: PathBuf, m: usize, seed: u64, normalized: bool) -> PyResult<Vec<[f64; 2]>> {
    let mask = masks::load_mask(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let pts = if normalized {
        masks::sample_mask(&mask, m, seed)
    } else {
        masks::sample_mask_in_frame(&mask, m, seed, RenderFrame::default())
    };
    Ok(pts.map_err(value_err)?.into_points())
}

#[pyfunction]
fn derive_seed(root: u64, purpose: &str, index: u64) -> u64 {
    latentfit::seed::derive_seed(root, purpose, index)
}

#[pymodule]
fn latentfit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Pose>()?;
    m.add_class::<Autoencoder>()?;
    m.add_class::<GmmModel>()?;
    m.add_class::<Reconstruction>()?;
    m.add_function(wrap_pyfunction!(train_autoencoder, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer2, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer3, m)?)?;
    m.add_function(wrap_pyfunction!(emd_approx, m)?)?;
    m.add_function(wrap_pyfunction!(emd_exact, m)?)?;
    m.add_function(wrap_pyfunction!(sample_mask, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
