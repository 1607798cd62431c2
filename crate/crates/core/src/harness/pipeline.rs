//! Training, prior fitting and reconstruction commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SilhouetteFrame};
use super::synth::Manifest;
use super::{create_dir, par_map, read_json, svg, write_json, write_text, HarnessError};
use crate::geometry::{load_ply, save_ply, PointCloud3, PointSet2};
use crate::inference::{reconstruct, InferenceResult};
use crate::masks::{load_mask, sample_mask, sample_mask_in_frame, RenderFrame};
use crate::metrics::chamfer3;
use crate::neural::{train_autoencoder_with, Autoencoder, LatentCode};
use crate::pose::project;
use crate::prior::{fit_gmm, EmConfig, EmReport, GmmModel};
use crate::seed::derive_seed;

pub const AUTOENCODER_FILE: &str = "autoencoder.json";
pub const GMM_FILE: &str = "gmm.json";

/// Mean-shape baseline: the training shape with the lowest total Chamfer
/// distance to all others, found by exhaustive scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub index: usize,
    pub mean_cd: f64,
}

pub fn mean_shape_baseline(clouds: &[PointCloud3]) -> Result<Baseline, HarnessError> {
    let n = clouds.len();
    let mut best = Baseline {
        index: 0,
        mean_cd: f64::INFINITY,
    };
    for (i, a) in clouds.iter().enumerate() {
        let mut total = 0.0;
        for b in clouds {
            total += chamfer3(a, b)?;
        }
        if total / (n as f64) < best.mean_cd {
            best = Baseline {
                index: i,
                mean_cd: total / n as f64,
            };
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_epoch_loss: f64,
    /// Mean Chamfer distance between each training cloud and its
    /// reconstruction by the trained model.
    pub mean_train_cd: f64,
    pub baseline: Baseline,
    pub model_hash: String,
}

pub(crate) fn load_train_clouds(
    cfg: &ExperimentConfig,
    manifest: &Manifest,
) -> Result<Vec<PointCloud3>, HarnessError> {
    let dir = cfg.dataset_dir();
    manifest
        .train
        .iter()
        .map(|c| Ok(load_ply(dir.join(&c.cloud))?))
        .collect()
}

pub(crate) fn load_model(cfg: &ExperimentConfig) -> Result<Autoencoder, HarnessError> {
    let path = cfg.models_dir().join(AUTOENCODER_FILE);
    if !path.exists() {
        return Err(HarnessError::MissingInput(path));
    }
    Ok(Autoencoder::load(&path)?)
}

/// Loads the prior and checks it was fitted against `model`.
pub(crate) fn load_prior(
    cfg: &ExperimentConfig,
    model: &Autoencoder,
) -> Result<GmmModel, HarnessError> {
    let path = cfg.models_dir().join(GMM_FILE);
    if !path.exists() {
        return Err(HarnessError::MissingInput(path));
    }
    let gmm = GmmModel::load(&path)?;
    let hash = model.version_hash();
    match gmm.latent_model_hash() {
        Some(h) if h != hash => Err(HarnessError::HashMismatch {
            prior: h.to_string(),
            model: hash,
        }),
        _ => Ok(gmm),
    }
}

/// Trains the autoencoder on the training split. Writes the model, the
/// per-epoch loss curve and a summary with the mean-shape baseline.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary, HarnessError> {
    let manifest = Manifest::load(&cfg.dataset_dir())?;
    let clouds = load_train_clouds(cfg, &manifest)?;
    let (model, report) = train_autoencoder_with(&clouds, &cfg.train, |epoch, loss| {
        log::info!("epoch {epoch}: loss {loss:.6}");
    })?;
    let dir = cfg.models_dir();
    create_dir(&dir)?;
    model.save(dir.join(AUTOENCODER_FILE))?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in report.epoch_losses.iter().enumerate() {
        writeln!(curve, "{e},{l:e}").expect("write to string");
    }
    write_text(&dir.join("loss_curve.csv"), &curve)?;

    let mut total = 0.0;
    for c in &clouds {
        total += chamfer3(&model.decode(&model.encode(c)?)?, c)?;
    }
    let summary = TrainSummary {
        epochs: report.epoch_losses.len(),
        final_epoch_loss: report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        mean_train_cd: total / clouds.len() as f64,
        baseline: mean_shape_baseline(&clouds)?,
        model_hash: model.version_hash(),
    };
    write_json(&dir.join("train_summary.json"), &summary)?;
    log::info!(
        "mean train CD {:.5} against baseline {:.5}",
        summary.mean_train_cd,
        summary.baseline.mean_cd
    );
    Ok(summary)
}

/// One attempted component count during prior selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorAttempt {
    pub k: usize,
    pub final_log_likelihood: f64,
    pub iterations: usize,
    /// Smallest Chamfer distance between two decoded means.
    pub min_mean_cd: f64,
    pub accepted: bool,
}

/// Likelihood along the segment between two component means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPair {
    pub a: usize,
    pub b: usize,
    /// Larger of the Mahalanobis distances of each mean under the other's
    /// component.
    pub separation: f64,
    pub nll_a: f64,
    pub nll_b: f64,
    pub nll_mid: f64,
    /// `(t, NLL)` along the segment.
    pub profile: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorReport {
    pub k: usize,
    pub attempts: Vec<PriorAttempt>,
    pub em: EmReport,
    pub model_hash: String,
    pub interpolation: Vec<InterpolationPair>,
}

fn min_pairwise_cd(clouds: &[PointCloud3]) -> Result<f64, HarnessError> {
    let mut best = f64::INFINITY;
    for i in 0..clouds.len() {
        for j in i + 1..clouds.len() {
            best = best.min(chamfer3(&clouds[i], &clouds[j])?);
        }
    }
    Ok(best)
}

/// Segment likelihood for every pair of means, flagged by separation.
pub fn interpolation_pairs(
    gmm: &GmmModel,
    steps: usize,
) -> Result<Vec<InterpolationPair>, HarnessError> {
    let means = gmm.means();
    let mut out = Vec::new();
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let separation = gmm
                .mahalanobis(a, &means[b])?
                .max(gmm.mahalanobis(b, &means[a])?);
            let mid: Vec<f64> = means[a]
                .iter()
                .zip(&means[b])
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            out.push(InterpolationPair {
                a,
                b,
                separation,
                nll_a: gmm.nll(&means[a])?,
                nll_b: gmm.nll(&means[b])?,
                nll_mid: gmm.nll(&mid)?,
                profile: gmm.likelihood_profile(&means[a], &means[b], steps)?,
            });
        }
    }
    Ok(out)
}

/// Encodes the training split and fits the mixture prior. Starting from the
/// configured K, K is lowered until every pair of decoded means is at least
/// `min_mean_cd` apart.
pub fn cmd_fit_prior(cfg: &ExperimentConfig) -> Result<(GmmModel, PriorReport), HarnessError> {
    let manifest = Manifest::load(&cfg.dataset_dir())?;
    let model = load_model(cfg)?;
    let clouds = load_train_clouds(cfg, &manifest)?;
    let codes = clouds
        .iter()
        .map(|c| model.encode(c))
        .collect::<Result<Vec<LatentCode>, _>>()?;

    let mut attempts = Vec::new();
    let mut chosen = None;
    for k in (1..=cfg.em.k).rev() {
        let em = EmConfig {
            k,
            ..cfg.em.clone()
        };
        let (gmm, report) = fit_gmm(&codes, &em)?;
        let decoded = decode_means(&model, &gmm)?;
        let min_mean_cd = min_pairwise_cd(&decoded)?;
        let accepted = k == 1 || min_mean_cd >= cfg.prior_selection.min_mean_cd;
        attempts.push(PriorAttempt {
            k,
            final_log_likelihood: report.log_likelihood.last().copied().unwrap_or(f64::NAN),
            iterations: report.iterations,
            min_mean_cd,
            accepted,
        });
        if accepted {
            chosen = Some((gmm, report, decoded));
            break;
        }
        log::info!("K = {k}: decoded means only {min_mean_cd:.5} apart, lowering K");
    }
    let (gmm, em_report, decoded) = chosen.expect("K = 1 is always accepted");
    let hash = model.version_hash();
    let gmm = gmm.with_latent_model_hash(hash.clone());

    let dir = cfg.models_dir();
    gmm.save(dir.join(GMM_FILE))?;
    for (k, cloud) in decoded.iter().enumerate() {
        save_ply(cloud, dir.join(format!("gmm_mean_{k}.ply")))?;
    }
    let mut trace = String::from("iteration,mean_log_likelihood\n");
    for (i, ll) in em_report.log_likelihood.iter().enumerate() {
        writeln!(trace, "{i},{ll:e}").expect("write to string");
    }
    write_text(&dir.join("em_trace.csv"), &trace)?;
    let report = PriorReport {
        k: gmm.n_components(),
        attempts,
        em: em_report,
        model_hash: hash,
        interpolation: interpolation_pairs(&gmm, 20)?,
    };
    write_json(&dir.join("prior_report.json"), &report)?;
    log::info!("fitted {} components", report.k);
    Ok((gmm, report))
}

pub(crate) fn decode_means(
    model: &Autoencoder,
    gmm: &GmmModel,
) -> Result<Vec<PointCloud3>, HarnessError> {
    gmm.means()
        .iter()
        .map(|m| Ok(model.decode(&LatentCode::new(m.clone())?)?))
        .collect()
}

/// Ablation arm of a reconstruction run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Full,
    NoPrior,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Full, Condition::NoPrior];

    pub fn dir_name(self) -> &'static str {
        match self {
            Condition::Full => "full",
            Condition::NoPrior => "no_prior",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReconstructTarget {
    /// Every test case of the dataset manifest.
    TestSplit,
    /// A single mask file.
    Mask(PathBuf),
}

/// Result file of one reconstructed mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: String,
    pub condition: Condition,
    /// Relative to the run directory when the mask lies inside it.
    pub mask: PathBuf,
    pub samples: usize,
    pub wall_time_s: f64,
    pub result: InferenceResult,
}

fn silhouette(
    cfg: &ExperimentConfig,
    mask_path: &Path,
    index: usize,
) -> Result<PointSet2, HarnessError> {
    let mask = load_mask(mask_path)?;
    let m = cfg.silhouette.max_samples.min(mask.foreground_count());
    let seed = derive_seed(cfg.seed, "silhouette", index as u64);
    Ok(match cfg.silhouette.frame {
        SilhouetteFrame::Render => sample_mask_in_frame(&mask, m, seed, RenderFrame::default())?,
        SilhouetteFrame::Normalized => sample_mask(&mask, m, seed)?,
    })
}

/// Reconstructs each target mask and writes `<id>.json`, `<id>.ply` and
/// `<id>_trace.csv` below `results/<condition>/`.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    target: &ReconstructTarget,
    condition: Condition,
) -> Result<Vec<CaseResult>, HarnessError> {
    let model = load_model(cfg)?;
    let gmm = load_prior(cfg, &model)?;
    let mut inference = cfg.inference.clone();
    inference.use_prior = condition == Condition::Full && inference.use_prior;

    let jobs: Vec<(String, PathBuf)> = match target {
        ReconstructTarget::TestSplit => {
            let dir = cfg.dataset_dir();
            Manifest::load(&dir)?
                .test
                .into_iter()
                .map(|c| {
                    (
                        format!("case_{}", c.id.trim_start_matches("test_")),
                        dir.join(c.mask),
                    )
                })
                .collect()
        }
        ReconstructTarget::Mask(path) => {
            let stem = path
                .file_stem()
                .map_or("mask".into(), |s| s.to_string_lossy().into_owned());
            vec![(stem, path.clone())]
        }
    };
    let out = cfg.results_dir().join(condition.dir_name());
    create_dir(&out)?;
    par_map(&jobs, |index, (id, mask_path)| {
        let sil = silhouette(cfg, mask_path, index)?;
        let start = Instant::now();
        let result = reconstruct(&model, &gmm, &sil, &inference)?;
        let wall_time_s = start.elapsed().as_secs_f64();
        if let Some(cloud) = &result.cloud {
            save_ply(cloud, out.join(format!("{id}.ply")))?;
        }
        result.write_traces_csv(out.join(format!("{id}_trace.csv")))?;
        if let Some(cloud) = &result.cloud {
            let mut fitted = project(cloud, &result.pose).into_points();
            if let Some(sim) = &result.similarity {
                sim.apply(&mut fitted);
            }
            let plot = svg::scatter(
                &[(sil.points(), "gray"), (&fitted, "crimson")],
                RenderFrame::default().extent,
            );
            write_text(&out.join(format!("{id}.svg")), &plot)?;
        }
        let case = CaseResult {
            case: id.clone(),
            condition,
            mask: mask_path
                .strip_prefix(&cfg.out_dir)
                .unwrap_or(mask_path)
                .to_path_buf(),
            samples: sil.len(),
            wall_time_s,
            result,
        };
        write_json(&out.join(format!("{id}.json")), &case)?;
        log::info!(
            "{} {id}: L_sil {:.5} after restart {} ({:.1}s)",
            condition.dir_name(),
            case.result.final_terms.sil,
            case.result.best_restart,
            wall_time_s
        );
        Ok(case)
    })
}

pub(crate) fn load_case(dir: &Path, id: &str) -> Result<(CaseResult, PointCloud3), HarnessError> {
    let case: CaseResult = read_json(&dir.join(format!("{id}.json")))?;
    let ply = dir.join(format!("{id}.ply"));
    if !ply.exists() {
        return Err(HarnessError::MissingInput(ply));
    }
    Ok((case, load_ply(ply)?))
}
