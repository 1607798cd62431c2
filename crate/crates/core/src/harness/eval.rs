//! Scoring of reconstructions against ground truth and the benchmark
//! summary that drives the CLI exit code.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{decode_means, load_case, load_model, load_prior, Condition};
use super::synth::Manifest;
use super::{create_dir, par_map, write_json, write_text, HarnessError};
use crate::geometry::{load_ply, PointCloud3};
use crate::metrics::{chamfer3, emd_approx_with, EmdOptions};

/// Per-case metrics of one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub case: String,
    pub condition: Condition,
    pub cd: f64,
    /// Absent when EMD is disabled in the config.
    pub emd: Option<f64>,
    pub l_sil: f64,
    pub l_shape: f64,
    pub restart: usize,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Lowest Chamfer distance of any decoded mixture mean to the ground
    /// truth, i.e. of the best possible initialization.
    pub best_init_cd: f64,
    pub beats_init: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub cases: usize,
    pub mean_cd: f64,
    pub mean_emd: Option<f64>,
    pub beat_init_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub conditions: Vec<ConditionSummary>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl EvalSummary {
    pub fn condition(&self, c: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }
}

/// Chamfer distance and, when requested, approximate EMD. Reconstruction
/// and ground truth are compared in the canonical object frame.
pub fn score(
    reconstruction: &PointCloud3,
    truth: &PointCloud3,
    emd: bool,
) -> Result<(f64, Option<f64>), HarnessError> {
    let cd = chamfer3(reconstruction, truth)?;
    let emd = if emd {
        Some(emd_approx_with(
            reconstruction,
            truth,
            EmdOptions { resample: true },
        )?)
    } else {
        None
    };
    Ok((cd, emd))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Scores every reconstructed test case, writes `eval.csv` and
/// `summary.json`, and checks the configured thresholds. Conditions without
/// results are skipped. Model and dataset files are only read.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<(Vec<EvalRow>, EvalSummary), HarnessError> {
    let dataset = cfg.dataset_dir();
    let manifest = Manifest::load(&dataset)?;
    let model = load_model(cfg)?;
    let gmm = load_prior(cfg, &model)?;
    let means = decode_means(&model, &gmm)?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for condition in Condition::ALL {
        let dir = cfg.results_dir().join(condition.dir_name());
        if !dir.exists() {
            continue;
        }
        let mut cond_rows = par_map(&manifest.test, |_, test| {
            let id = format!("case_{}", test.id.trim_start_matches("test_"));
            let (case, cloud) = load_case(&dir, &id)?;
            let truth = load_ply(dataset.join(&test.cloud))?;
            let (cd, emd) = score(&cloud, &truth, cfg.emd)?;
            let mut best_init_cd = f64::INFINITY;
            for m in &means {
                best_init_cd = best_init_cd.min(chamfer3(m, &truth)?);
            }
            let r = &case.result;
            Ok(EvalRow {
                case: id,
                condition,
                cd,
                emd,
                l_sil: r.final_terms.sil,
                l_shape: r.final_terms.shape,
                restart: r.best_restart,
                iterations: r.restarts[r.best_restart].outcome.iterations,
                wall_time_s: case.wall_time_s,
                best_init_cd,
                beats_init: cd <= best_init_cd,
            })
        })?;
        let n = cond_rows.len();
        summaries.push(ConditionSummary {
            condition,
            cases: n,
            mean_cd: mean(cond_rows.iter().map(|r| r.cd)),
            mean_emd: cfg
                .emd
                .then(|| mean(cond_rows.iter().filter_map(|r| r.emd))),
            beat_init_fraction: cond_rows.iter().filter(|r| r.beats_init).count() as f64
                / n.max(1) as f64,
        });
        rows.append(&mut cond_rows);
    }

    let mut checks = Vec::new();
    let full = summaries.iter().find(|s| s.condition == Condition::Full);
    let ablation = summaries.iter().find(|s| s.condition == Condition::NoPrior);
    if let Some(f) = full {
        let threshold = cfg.thresholds.min_beat_init_fraction;
        checks.push(Check {
            name: "beat_init_fraction".into(),
            value: f.beat_init_fraction,
            threshold,
            passed: f.beat_init_fraction >= threshold,
        });
    }
    if cfg.thresholds.prior_not_worse {
        let (value, threshold) = match (full, ablation) {
            (Some(f), Some(a)) => (f.mean_cd, a.mean_cd),
            _ => (f64::NAN, f64::NAN),
        };
        checks.push(Check {
            name: "mean_cd_full_le_no_prior".into(),
            value,
            threshold,
            passed: value <= threshold,
        });
    }
    let summary = EvalSummary {
        passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
        conditions: summaries,
        checks,
    };

    let dir = cfg.eval_dir();
    create_dir(&dir)?;
    write_text(&dir.join("eval.csv"), &rows_to_csv(&rows))?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((rows, summary))
}

fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(
        "case,condition,cd,emd,l_sil,l_shape,restart,iterations,wall_time_s,best_init_cd,beats_init\n",
    );
    for r in rows {
        let emd = r.emd.map_or(String::new(), |v| format!("{v:e}"));
        writeln!(
            out,
            "{},{},{:e},{emd},{:e},{:e},{},{},{:.3},{:e},{}",
            r.case,
            r.condition.dir_name(),
            r.cd,
            r.l_sil,
            r.l_shape,
            r.restart,
            r.iterations,
            r.wall_time_s,
            r.best_init_cd,
            r.beats_init
        )
        .expect("write to string");
    }
    out
}
