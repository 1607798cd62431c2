//! Synthetic benchmark generation: procedural shapes, sampled clouds,
//! ground-truth poses and rendered masks.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{create_dir, read_json, write_json, HarnessError};
use crate::geometry::{
    generate_shape, normalize_cloud_with_transform, sample_surface, save_off, save_ply,
    PointCloud3, ShapeFamily, TriMesh,
};
use crate::masks::{rasterize, BinaryMask, RENDER_EXTENT};
use crate::pose::{project, Pose};
use crate::seed::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCase {
    pub id: String,
    pub params: Vec<f64>,
    pub mesh: PathBuf,
    pub cloud: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub params: Vec<f64>,
    pub mesh: PathBuf,
    pub cloud: PathBuf,
    pub mask: PathBuf,
    pub pose: Pose,
    pub foreground_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderInfo {
    pub resolution: usize,
    /// Masks cover `[−extent, extent]²` of the camera plane.
    pub extent: f64,
    pub splat_radius: f64,
    pub points: usize,
}

/// Index of a generated dataset. Paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub family: ShapeFamily,
    pub n_points: usize,
    pub render: RenderInfo,
    pub train: Vec<TrainCase>,
    pub test: Vec<TestCase>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        read_json(&dir.join("manifest.json"))
    }
}

/// One generated shape: the normalized mesh and its normalized cloud. The
/// normalization is computed on the stored cloud and applied to the mesh,
/// so both share a frame.
pub fn make_shape(
    cfg: &ExperimentConfig,
    index: usize,
) -> Result<(Vec<f64>, TriMesh, PointCloud3), HarnessError> {
    let params = cfg.family.sample_params(index as u64);
    let mesh = generate_shape(&cfg.family, &params)?;
    let raw = sample_surface(
        &mesh,
        cfg.dataset.n_points,
        derive_seed(cfg.seed, "surface", index as u64),
    )?;
    let (cloud, transform) = normalize_cloud_with_transform(&raw)?;
    Ok((params, mesh.transformed(&transform), cloud))
}

pub fn test_pose(cfg: &ExperimentConfig, case: usize) -> Pose {
    let mut rng = stream(cfg.seed, "pose", case as u64);
    let d = &cfg.dataset;
    let az = rng.random_range(d.azimuth_deg.0..=d.azimuth_deg.1);
    let el = rng.random_range(d.elevation_deg.0..=d.elevation_deg.1);
    Pose::from_degrees(az, el, d.tilt_deg)
}

/// Renders the silhouette of a normalized mesh at `pose` from a dense
/// surface sample.
pub fn render_mask(
    cfg: &ExperimentConfig,
    mesh: &TriMesh,
    pose: &Pose,
    case: usize,
) -> Result<BinaryMask, HarnessError> {
    let dense = sample_surface(
        mesh,
        cfg.dataset.render_points,
        derive_seed(cfg.seed, "render", case as u64),
    )?;
    Ok(rasterize(
        &project(&dense, pose),
        cfg.dataset.mask_resolution,
        cfg.dataset.splat_radius,
    ))
}

/// Writes the dataset below `cfg.dataset_dir()` and returns its manifest.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Manifest, HarnessError> {
    let dir = cfg.dataset_dir();
    for sub in ["meshes", "clouds", "masks"] {
        create_dir(&dir.join(sub))?;
    }
    let d = &cfg.dataset;
    let mut train = Vec::with_capacity(d.n_train);
    let mut test = Vec::with_capacity(d.n_test);
    for index in 0..d.n_train + d.n_test {
        let (params, mesh, cloud) = make_shape(cfg, index)?;
        if index < d.n_train {
            let id = format!("train_{index:03}");
            let case = TrainCase {
                mesh: PathBuf::from(format!("meshes/{id}.off")),
                cloud: PathBuf::from(format!("clouds/{id}.ply")),
                id,
                params,
            };
            save_off(&mesh, dir.join(&case.mesh))?;
            save_ply(&cloud, dir.join(&case.cloud))?;
            train.push(case);
        } else {
            let t = index - d.n_train;
            let id = format!("test_{t:03}");
            let pose = test_pose(cfg, t);
            let mask = render_mask(cfg, &mesh, &pose, t)?;
            let case = TestCase {
                mesh: PathBuf::from(format!("meshes/{id}.off")),
                cloud: PathBuf::from(format!("clouds/{id}.ply")),
                mask: PathBuf::from(format!("masks/{id}.pgm")),
                foreground_pixels: mask.foreground_count(),
                id,
                params,
                pose,
            };
            save_off(&mesh, dir.join(&case.mesh))?;
            save_ply(&cloud, dir.join(&case.cloud))?;
            mask.save_pgm(dir.join(&case.mask))?;
            test.push(case);
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        family: cfg.family.family,
        n_points: d.n_points,
        render: RenderInfo {
            resolution: d.mask_resolution,
            extent: RENDER_EXTENT,
            splat_radius: d.splat_radius,
            points: d.render_points,
        },
        train,
        test,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!(
        "wrote {} training and {} test shapes to {}",
        d.n_train,
        d.n_test,
        dir.display()
    );
    Ok(manifest)
}
