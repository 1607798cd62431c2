use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geometry::{ShapeFamily, ShapeFamilySpec};
use crate::inference::InferenceConfig;
use crate::neural::TrainConfig;
use crate::prior::{CovarianceType, EmConfig};
use crate::seed::derive_seed;

/// Output layout below the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub models: PathBuf,
    pub results: PathBuf,
    pub eval: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            models: "models".into(),
            results: "results".into(),
            eval: "eval".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Points per stored cloud.
    pub n_points: usize,
    /// Surface samples used to render each test mask.
    pub render_points: usize,
    pub mask_resolution: usize,
    pub splat_radius: f64,
    pub azimuth_deg: (f64, f64),
    pub elevation_deg: (f64, f64),
    pub tilt_deg: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 30,
            n_points: 256,
            render_points: 20_000,
            mask_resolution: 128,
            splat_radius: 0.012,
            azimuth_deg: (-60.0, 60.0),
            elevation_deg: (0.0, 30.0),
            tilt_deg: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SilhouetteFrame {
    /// Map mask pixels back through the known render frame.
    #[default]
    Render,
    /// Center and scale the samples to the calibration radius.
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SilhouetteConfig {
    /// Upper bound on silhouette samples; fewer when the mask is smaller.
    pub max_samples: usize,
    pub frame: SilhouetteFrame,
}

impl Default for SilhouetteConfig {
    fn default() -> Self {
        Self {
            max_samples: 1024,
            frame: SilhouetteFrame::Render,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSelection {
    /// Components whose decoded means lie closer than this (3D Chamfer) are
    /// not distinct shapes; K is lowered until all pairs clear it.
    pub min_mean_cd: f64,
}

impl Default for PriorSelection {
    fn default() -> Self {
        Self { min_mean_cd: 0.002 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Fraction of cases whose reconstruction must beat the best decoded
    /// mixture mean.
    pub min_beat_init_fraction: f64,
    /// Require mean CD with the prior ≤ mean CD without it.
    pub prior_not_worse: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_beat_init_fraction: 0.7,
            prior_not_worse: true,
        }
    }
}

/// Everything one experiment needs. All randomness derives from `seed`;
/// the seeds inside the family, training and EM sections are overwritten
/// from it by [`ExperimentConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub family: ShapeFamilySpec,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub em: EmConfig,
    pub prior_selection: PriorSelection,
    pub inference: InferenceConfig,
    pub silhouette: SilhouetteConfig,
    /// Compute EMD during evaluation.
    pub emd: bool,
    pub thresholds: Thresholds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let family = ShapeFamily::SlatChair;
        Self {
            seed: 7,
            out_dir: "run".into(),
            paths: Paths::default(),
            family: ShapeFamilySpec::new(family, 0),
            dataset: DatasetConfig::default(),
            train: TrainConfig::desk(0),
            // 200 latents cannot support K full 32x32 covariances
            em: EmConfig {
                covariance: CovarianceType::Diagonal,
                ..EmConfig::with_k(family.default_components(), 0)
            },
            prior_selection: PriorSelection::default(),
            inference: InferenceConfig::default(),
            silhouette: SilhouetteConfig::default(),
            emd: true,
            thresholds: Thresholds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Derives the per-purpose seeds from the root seed and validates every
    /// section.
    pub fn resolve(mut self) -> Result<Self, HarnessError> {
        if self.family.ranges.is_empty() {
            self.family.ranges = self.family.family.default_ranges();
        }
        self.family.seed = derive_seed(self.seed, "family", 0);
        self.train.seed = derive_seed(self.seed, "train", 0);
        self.em.seed = derive_seed(self.seed, "em", 0);
        self.family.validate()?;
        self.train.validate()?;
        self.em.validate()?;
        self.inference.validate()?;
        let d = &self.dataset;
        if d.n_train == 0
            || d.n_test == 0
            || d.n_points == 0
            || d.render_points == 0
            || d.mask_resolution == 0
        {
            return Err(HarnessError::Config(
                "dataset sizes must be positive".into(),
            ));
        }
        if d.n_points != self.train.architecture.n_points {
            return Err(HarnessError::Config(format!(
                "dataset clouds have {} points but the decoder produces {}",
                d.n_points, self.train.architecture.n_points
            )));
        }
        if !(d.splat_radius > 0.0)
            || d.azimuth_deg.0 > d.azimuth_deg.1
            || d.elevation_deg.0 > d.elevation_deg.1
        {
            return Err(HarnessError::Config("invalid render settings".into()));
        }
        if self.silhouette.max_samples == 0 {
            return Err(HarnessError::Config(
                "silhouette sample count must be positive".into(),
            ));
        }
        Ok(self)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join(&self.paths.dataset)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join(&self.paths.models)
    }

    pub fn results_dir(&self) -> PathBuf {
        self.out_dir.join(&self.paths.results)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join(&self.paths.eval)
    }
}
