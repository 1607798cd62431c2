//! Acceptance gate. Prints one PASS/FAIL line per criterion and a summary
//! naming the failed ones; with `ACCEPTANCE_STRICT=1` any failure also makes
//! the exit status nonzero. Tolerances and runtime budgets are pinned here.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use latentfit::geometry::{PointCloud3, PointSet2};
use latentfit::harness::pipeline::interpolation_pairs;
use latentfit::harness::{
    cmd_evaluate, cmd_fit_prior, cmd_reconstruct, cmd_synth, cmd_train, Condition,
    ExperimentConfig, ReconstructTarget,
};
use latentfit::inference::{lambda_at, run_single, InferenceConfig};
use latentfit::metrics::{chamfer2, chamfer3, emd_approx, emd_exact, hungarian};
use latentfit::neural::{train_autoencoder, Autoencoder, TrainConfig};
use latentfit::pose::{project, Pose};
use latentfit::prior::{fit_gmm, EmConfig, EmReport, GmmModel};
use latentfit::seed;
use latentfit::LatentCode;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const GRAD_CONFIGS: usize = 100;
const GRAD_TOL_SMOOTH: f64 = 1e-5;
const GRAD_TOL_OBJECTIVE: f64 = 1e-4;
const CHAMFER_TOL: f64 = 1e-12;
const EMD_REL_TOL: f64 = 0.05;
const EM_MONOTONE_TOL: f64 = 1e-9;
const CLUSTER_TOL: f64 = 0.1;
const OVERFIT_FRACTION: f64 = 0.1;
const FIXED_POINT_ITERATIONS: usize = 50;
const FIXED_POINT_SIL: f64 = 1e-4;
const BEAT_INIT_FRACTION: f64 = 0.7;
const SEPARATION: f64 = 6.0;
const ROOT_SEED: u64 = 7;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn report(id: u32, v: &Verdict, elapsed: Duration, budget: Option<Duration>) -> bool {
    let in_budget = budget.is_none_or(|b| elapsed <= b);
    let ok = v.passed && in_budget;
    let budget_note = match budget {
        Some(b) if !in_budget => format!("; over budget of {}s", b.as_secs()),
        Some(b) => format!("; budget {}s", b.as_secs()),
        None => String::new(),
    };
    println!(
        "criterion {id}: {} {} ({:.1}s{budget_note})",
        if ok { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    ok
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

// ---- criterion 2 ---------------------------------------------------------

fn gradients() -> Verdict {
    use common::*;
    let checks = [
        (
            "decoder params",
            check_decoder_params(GRAD_CONFIGS, 21),
            GRAD_TOL_SMOOTH,
        ),
        (
            "latent input",
            check_latent_input(GRAD_CONFIGS, 22),
            GRAD_TOL_SMOOTH,
        ),
        (
            "encoder params",
            check_encoder_params(GRAD_CONFIGS, 23),
            GRAD_TOL_SMOOTH,
        ),
        ("gmm nll", check_gmm_nll(GRAD_CONFIGS, 24), GRAD_TOL_SMOOTH),
        ("pose angles", check_pose(GRAD_CONFIGS, 25), GRAD_TOL_SMOOTH),
        (
            "objective",
            check_objective(GRAD_CONFIGS, 26),
            GRAD_TOL_OBJECTIVE,
        ),
    ];
    let passed = checks
        .iter()
        .all(|(_, s, tol)| s.passes(GRAD_CONFIGS, *tol));
    let detail = checks
        .iter()
        .map(|(name, s, tol)| {
            format!(
                "{name} {}/{} worst {:.1e} < {tol:.0e}",
                s.checked,
                s.checked + s.skipped,
                s.worst
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    verdict(passed, detail)
}

// ---- criterion 3 ---------------------------------------------------------

fn chamfer_oracle<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
    let one = |x: &[[f64; D]], y: &[[f64; D]]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| (0..D).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / x.len() as f64
    };
    one(a, b) + one(b, a)
}

fn brute_force_assignment(cost: &[f64], n: usize) -> f64 {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    fn heap(k: usize, perm: &mut Vec<usize>, cost: &[f64], n: usize, best: &mut f64) {
        if k == 1 {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            *best = best.min(c);
            return;
        }
        for i in 0..k {
            heap(k - 1, perm, cost, n, best);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            perm.swap(j, k - 1);
        }
    }
    heap(n, &mut perm, cost, n, &mut best);
    best
}

fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud3 {
    PointCloud3::new(
        (0..n)
            .map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

fn metrics() -> Verdict {
    let mut rng = seed::rng(31);
    let mut worst_cd: f64 = 0.0;
    for _ in 0..200 {
        let (na, nb) = (rng.random_range(1..300), rng.random_range(1..300));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        worst_cd = worst_cd
            .max((chamfer3(&a, &b).unwrap() - chamfer_oracle(a.points(), b.points())).abs());
        let a2 = PointSet2::new(a.points().iter().map(|p| [p[0], p[1]]).collect()).unwrap();
        let b2 = PointSet2::new(b.points().iter().map(|p| [p[0], p[1]]).collect()).unwrap();
        worst_cd = worst_cd
            .max((chamfer2(&a2, &b2).unwrap() - chamfer_oracle(a2.points(), b2.points())).abs());
    }

    let mut assignment_ok = true;
    for _ in 0..20 {
        let n = 7;
        let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let h = hungarian(&cost, n);
        let hc: f64 = h.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
        assignment_ok &= (hc - brute_force_assignment(&cost, n)).abs() < 1e-12;
    }

    let mut worst_emd: f64 = 0.0;
    for _ in 0..100 {
        let a = random_cloud(&mut rng, 32);
        let b = random_cloud(&mut rng, 32);
        let exact = emd_exact(&a, &b).unwrap();
        worst_emd = worst_emd.max((emd_approx(&a, &b).unwrap() - exact).abs() / exact);
    }

    let mut exact_cases = true;
    for _ in 0..20 {
        let a = random_cloud(&mut rng, 64);
        let mut shuffled = a.points().to_vec();
        shuffled.shuffle(&mut rng);
        let p = PointCloud3::new(shuffled).unwrap();
        exact_cases &= chamfer3(&a, &a).unwrap() == 0.0 && chamfer3(&a, &p).unwrap() == 0.0;
        exact_cases &= emd_exact(&a, &p).unwrap() == 0.0 && emd_approx(&a, &p).unwrap() == 0.0;
    }

    verdict(
        worst_cd < CHAMFER_TOL && worst_emd < EMD_REL_TOL && assignment_ok && exact_cases,
        format!(
            "chamfer worst {worst_cd:.1e} < {CHAMFER_TOL:.0e}, emd worst rel {:.2}% < {:.0}%, hungarian = brute force {assignment_ok}, identity/permutation exact {exact_cases}",
            100.0 * worst_emd,
            100.0 * EMD_REL_TOL
        ),
    )
}

// ---- criteria 4 to 8, run twice for criterion 10 ----------------------------

/// Everything criteria 4 to 8 produce, keyed for the determinism
/// comparison. Timing fields are stripped.
#[derive(Default)]
struct Artifacts(BTreeMap<String, String>);

impl Artifacts {
    fn put(&mut self, key: impl Into<String>, value: String) {
        self.0.insert(key.into(), value);
    }

    fn put_file(&mut self, root: &Path, rel: &str) {
        let text = std::fs::read_to_string(root.join(rel)).unwrap_or_default();
        self.put(rel, strip_timing(&text));
    }
}

fn strip_timing(text: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(text) {
        Ok(mut v) => {
            fn walk(v: &mut serde_json::Value) {
                match v {
                    serde_json::Value::Object(m) => {
                        m.retain(|k, _| k != "wall_time_s");
                        m.values_mut().for_each(walk);
                    }
                    serde_json::Value::Array(a) => a.iter_mut().for_each(walk),
                    _ => {}
                }
            }
            walk(&mut v);
            v.to_string()
        }
        Err(_) => text.to_string(),
    }
}

fn monotone(report: &EmReport) -> bool {
    report.log_likelihood.windows(2).enumerate().all(|(i, w)| {
        report.reinitialized.iter().any(|&(it, _)| it == i) || w[1] >= w[0] - EM_MONOTONE_TOL
    })
}

fn em(art: &mut Artifacts) -> Verdict {
    const TRUE: [[f64; 2]; 3] = [[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]];
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut all_monotone = true;
    let mut worst: f64 = 0.0;
    for s in 0..10 {
        let mut rng = seed::stream(ROOT_SEED, "clusters", s);
        let data: Vec<Vec<f64>> = TRUE
            .iter()
            .flat_map(|m| {
                (0..1000)
                    .map(|_| vec![m[0] + noise.sample(&mut rng), m[1] + noise.sample(&mut rng)])
                    .collect::<Vec<_>>()
            })
            .collect();
        let (gmm, rep) = fit_gmm(
            &data,
            &EmConfig::with_k(3, seed::derive_seed(ROOT_SEED, "em", s)),
        )
        .unwrap();
        all_monotone &= monotone(&rep);
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let err = perms
            .iter()
            .map(|p| {
                (0..3)
                    .map(|k| {
                        let m = &gmm.means()[p[k]];
                        ((m[0] - TRUE[k][0]).powi(2) + (m[1] - TRUE[k][1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(err);
        art.put(format!("em/cluster_{s}.json"), gmm.to_json());
    }
    let mut rng = seed::stream(ROOT_SEED, "em-random", 0);
    let mut fits = 0;
    for t in 0..20 {
        let d = rng.random_range(1..8);
        let data: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let k = rng.random_range(1..6);
        let cfg = EmConfig {
            max_reinit: 50,
            ..EmConfig::with_k(k, t)
        };
        let (gmm, rep) = fit_gmm(&data, &cfg).unwrap();
        all_monotone &= monotone(&rep);
        fits += 1;
        art.put(format!("em/random_{t}.json"), gmm.to_json());
    }
    verdict(
        all_monotone && worst < CLUSTER_TOL,
        format!(
            "log-likelihood non-decreasing on {} fits {all_monotone}, cluster recovery worst {worst:.3} < {CLUSTER_TOL}",
            fits + 10
        ),
    )
}

fn origin_baseline(cloud: &PointCloud3) -> f64 {
    let origin = PointCloud3::new(vec![[0.0; 3]; cloud.len()]).unwrap();
    chamfer3(cloud, &origin).unwrap()
}

fn mean_shape_oracle(clouds: &[PointCloud3]) -> f64 {
    clouds
        .iter()
        .map(|a| clouds.iter().map(|b| chamfer3(a, b).unwrap()).sum::<f64>() / clouds.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

fn autoencoder(cfg: &ExperimentConfig, art: &mut Artifacts) -> Verdict {
    let manifest = cmd_synth(cfg).unwrap();
    let dir = cfg.dataset_dir();
    let clouds: Vec<PointCloud3> = manifest
        .train
        .iter()
        .map(|c| latentfit::geometry::load_ply(dir.join(&c.cloud)).unwrap())
        .collect();

    let target = &clouds[0];
    let one = TrainConfig {
        epochs: 200,
        ..cfg.train.clone()
    };
    let (model, _) = train_autoencoder(std::slice::from_ref(target), &one).unwrap();
    let overfit = chamfer3(
        &model.decode(&model.encode(target).unwrap()).unwrap(),
        target,
    )
    .unwrap();
    let overfit_base = origin_baseline(target);
    art.put("overfit_model.json", model.to_json());

    let summary = cmd_train(cfg).unwrap();
    let baseline = mean_shape_oracle(&clouds);
    art.put_file(&cfg.out_dir, "dataset/manifest.json");
    art.put_file(&cfg.out_dir, "models/autoencoder.json");
    art.put_file(&cfg.out_dir, "models/train_summary.json");
    verdict(
        overfit < OVERFIT_FRACTION * overfit_base && summary.mean_train_cd < baseline,
        format!(
            "overfit-one CD {overfit:.5} < {:.5}, {} shapes x {} epochs mean train CD {:.5} < mean-shape baseline {baseline:.5}",
            OVERFIT_FRACTION * overfit_base,
            clouds.len(),
            summary.epochs,
            summary.mean_train_cd
        ),
    )
}

fn schedule(art: &mut Artifacts) -> Verdict {
    let cfg = InferenceConfig::default();
    let at = |i| lambda_at(&cfg, i).unwrap();
    let (a, b, c) = (at(0), at(499), at(500));
    art.put("lambda", format!("{a:e},{b:e},{c:e}"));
    verdict(
        a == 1.0 && b == 1.0 && c == 0.001,
        format!("lambda(0) = {a}, lambda(499) = {b}, lambda(500) = {c}"),
    )
}

fn fixed_point(cfg: &ExperimentConfig, art: &mut Artifacts) -> Verdict {
    cmd_fit_prior(cfg).unwrap();
    let models = cfg.models_dir();
    let model = Autoencoder::load(models.join("autoencoder.json")).unwrap();
    let gmm = GmmModel::load(models.join("gmm.json")).unwrap();
    let icfg = InferenceConfig {
        max_iterations: FIXED_POINT_ITERATIONS,
        switch_iteration: FIXED_POINT_ITERATIONS,
        ..cfg.inference.clone()
    };
    let mut worst: f64 = 0.0;
    for (j, mean) in gmm.means().iter().enumerate() {
        let code = LatentCode::new(mean.clone()).unwrap();
        let sil = project(&model.decode(&code).unwrap(), &Pose::IDENTITY);
        let out = run_single(&model, &gmm, &sil, &code, Pose::IDENTITY, &icfg).unwrap();
        worst = worst.max(out.final_terms.sil);
        art.put(
            format!("fixed_point_{j}"),
            serde_json::to_string(&out).unwrap(),
        );
    }
    art.put_file(&cfg.out_dir, "models/gmm.json");
    art.put_file(&cfg.out_dir, "models/prior_report.json");
    verdict(
        worst < FIXED_POINT_SIL,
        format!(
            "{} components, worst L_sil after {FIXED_POINT_ITERATIONS} iterations {worst:.2e} < {FIXED_POINT_SIL:.0e}",
            gmm.n_components()
        ),
    )
}

fn benchmark(cfg: &ExperimentConfig, art: &mut Artifacts) -> Verdict {
    for condition in Condition::ALL {
        let cases = cmd_reconstruct(cfg, &ReconstructTarget::TestSplit, condition).unwrap();
        for c in &cases {
            art.put_file(
                &cfg.out_dir,
                &format!("results/{}/{}.json", condition.dir_name(), c.case),
            );
        }
    }
    let (_, summary) = cmd_evaluate(cfg).unwrap();
    art.put(
        "eval/summary.json",
        serde_json::to_string(&summary).unwrap(),
    );
    let full = summary.condition(Condition::Full).unwrap();
    let ablation = summary.condition(Condition::NoPrior).unwrap();
    verdict(
        full.beat_init_fraction >= BEAT_INIT_FRACTION && full.mean_cd <= ablation.mean_cd,
        format!(
            "{} cases, beats best initialization {:.0}% >= {:.0}%, mean CD full {:.5} <= no-prior {:.5} (EMD {:.5} vs {:.5})",
            full.cases,
            100.0 * full.beat_init_fraction,
            100.0 * BEAT_INIT_FRACTION,
            full.mean_cd,
            ablation.mean_cd,
            full.mean_emd.unwrap_or(f64::NAN),
            ablation.mean_emd.unwrap_or(f64::NAN)
        ),
    )
}

fn interpolation(cfg: &ExperimentConfig) -> Verdict {
    let gmm = GmmModel::load(cfg.models_dir().join("gmm.json")).unwrap();
    let pairs = interpolation_pairs(&gmm, 20).unwrap();
    let separated: Vec<_> = pairs.iter().filter(|p| p.separation > SEPARATION).collect();
    let holding = separated
        .iter()
        .filter(|p| p.nll_mid > p.nll_a.max(p.nll_b))
        .count();
    verdict(
        !separated.is_empty() && holding == separated.len(),
        format!(
            "midpoint NLL above both endpoints for {holding}/{} pairs separated by more than {SEPARATION} ({} pairs total)",
            separated.len(),
            pairs.len()
        ),
    )
}

struct Run {
    verdicts: Vec<(u32, Verdict, Duration, Option<Duration>)>,
    artifacts: Artifacts,
}

fn run_four_to_eight(out: &Path) -> Run {
    let cfg = ExperimentConfig {
        seed: ROOT_SEED,
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
    .resolve()
    .unwrap();
    let mut art = Artifacts::default();
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let mut verdicts = Vec::new();
    let (v, t) = timed(|| em(&mut art));
    verdicts.push((4, v, t, mins(1)));
    let (v, t) = timed(|| autoencoder(&cfg, &mut art));
    verdicts.push((5, v, t, mins(30)));
    let (v, t) = timed(|| schedule(&mut art));
    verdicts.push((6, v, t, None));
    let (v, t) = timed(|| fixed_point(&cfg, &mut art));
    verdicts.push((7, v, t, None));
    let (v, t) = timed(|| benchmark(&cfg, &mut art));
    verdicts.push((8, v, t, mins(20)));
    Run {
        verdicts,
        artifacts: art,
    }
}

fn main() {
    let mut failed: Vec<u32> = Vec::new();
    println!("criterion 1: OUT OF SCOPE reproducing the published benchmark numbers needs the original training and evaluation datasets");

    let (v, t) = timed(gradients);
    if !report(2, &v, t, Some(Duration::from_secs(60))) {
        failed.push(2);
    }
    let (v, t) = timed(metrics);
    if !report(3, &v, t, Some(Duration::from_secs(120))) {
        failed.push(3);
    }

    let first_dir = tempfile::tempdir().expect("temp dir");
    let first = run_four_to_eight(first_dir.path());
    for (id, v, t, budget) in &first.verdicts {
        if !report(*id, v, *t, *budget) {
            failed.push(*id);
        }
    }
    let cfg = ExperimentConfig {
        out_dir: first_dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let (v, t) = timed(|| interpolation(&cfg));
    if !report(9, &v, t, None) {
        failed.push(9);
    }

    let (v, t) = timed(|| {
        let second_dir = tempfile::tempdir().expect("temp dir");
        let second = run_four_to_eight(second_dir.path());
        let a = &first.artifacts.0;
        let b = &second.artifacts.0;
        let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
        let same_keys = a.len() == b.len();
        verdict(
            same_keys && differing.is_empty(),
            format!(
                "{} artifacts compared, {} differ{}",
                a.len(),
                differing.len(),
                differing
                    .first()
                    .map_or(String::new(), |k| format!(" (first: {k})"))
            ),
        )
    });
    if !report(10, &v, t, None) {
        failed.push(10);
    }

    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        return;
    }
    let list: Vec<String> = failed.iter().map(u32::to_string).collect();
    println!("acceptance: FAILED criteria {}", list.join(", "));
    // Known failures are recorded rather than hidden; set ACCEPTANCE_STRICT=1
    // to turn them into a nonzero exit.
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
