//! Joint optimization of a latent shape code and an object pose against a
//! silhouette.
//!
//! The objective is
//!
//! ```text
//! L(l, θ) = L_sil(l, θ) + λ · L_shape(l)
//! L_sil   = CD₂(K · R(θ) · dec(l), S_sil)
//! L_shape = −log Σ_k π_k N(l | μ_k, Σ_k)
//! ```
//!
//! with `λ = λ_high` for the first `switch_iteration` iterations and
//! `λ_low` afterwards. Each restart starts from one mixture mean with all
//! angles at zero and runs Adam with separate learning rates for the code
//! and the pose. The restart with the lowest final objective (evaluated at
//! `λ_low`) wins.
//!
//! A restart stops at `max_iterations`, or when the loss `l_t` satisfies
//! `|l_t − l_{t−W}| / max(|l_{t−W}|, 1e-12) < tolerance` for the plateau
//! window `W`, both iterates lying in the current λ phase. A plateau reached
//! while `λ_high` is active ends that phase early instead of the run, so the
//! low-weight refinement always happens.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, PointCloud3, PointSet2};
use crate::metrics::{chamfer_with_grad, ChamferOptions, MetricError};
use crate::neural::{AdamConfig, AdamState, Autoencoder, LatentCode, NeuralError};
use crate::pose::{project_grad, project_points, Pose, ShapeMismatch, Similarity2};
use crate::prior::{GmmModel, PriorError};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("iteration {iteration} outside the schedule of {max} iterations")]
    IterationOutOfRange { iteration: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("silhouette point set is empty")]
    EmptySilhouette,
    #[error("every restart produced a non-finite loss")]
    AllRestartsFailed,
    #[error("decoder latent dimension {decoder} differs from prior dimension {prior}")]
    DimensionMismatch { decoder: usize, prior: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartPolicy {
    /// One restart from every mixture mean.
    #[default]
    AllMeans,
    /// A single run from the heaviest component's mean.
    HeaviestMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub switch_iteration: usize,
    pub max_iterations: usize,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub latent_lr: f64,
    pub pose_lr: f64,
    pub restarts: RestartPolicy,
    /// When false the prior term is dropped entirely (λ = 0 throughout).
    pub use_prior: bool,
    /// Optimize an image-plane translation and scale alongside the pose.
    pub similarity: bool,
    pub similarity_lr: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            lambda_high: 1.0,
            lambda_low: 0.001,
            switch_iteration: 500,
            max_iterations: 1000,
            plateau_window: 20,
            plateau_tolerance: 1e-6,
            latent_lr: 0.01,
            pose_lr: 0.05,
            restarts: RestartPolicy::AllMeans,
            use_prior: true,
            similarity: false,
            similarity_lr: 0.01,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.into()));
        if !(self.lambda_low > 0.0) || !(self.lambda_high >= self.lambda_low) {
            return bad("need λ_high ≥ λ_low > 0");
        }
        if self.switch_iteration == 0 || self.switch_iteration > self.max_iterations {
            return bad("need 0 < switch_iteration ≤ max_iterations");
        }
        if self.plateau_window == 0 || !(self.plateau_tolerance >= 0.0) {
            return bad("plateau window must be positive and tolerance nonnegative");
        }
        if !(self.latent_lr > 0.0 && self.pose_lr > 0.0 && self.similarity_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }

    /// Weight of the final phase, used to rank restarts.
    pub fn final_lambda(&self) -> f64 {
        if self.use_prior {
            self.lambda_low
        } else {
            0.0
        }
    }
}

/// The scheduled prior weight at `iteration`: `λ_high` before
/// `switch_iteration`, `λ_low` from then on.
pub fn lambda_at(cfg: &InferenceConfig, iteration: usize) -> Result<f64, InferenceError> {
    if iteration >= cfg.max_iterations {
        return Err(InferenceError::IterationOutOfRange {
            iteration,
            max: cfg.max_iterations,
        });
    }
    Ok(if iteration < cfg.switch_iteration {
        cfg.lambda_high
    } else {
        cfg.lambda_low
    })
}

/// Loss values. Non-finite values serialize as JSON `null` and read back
/// as NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    #[serde(deserialize_with = "null_as_nan")]
    pub total: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub sil: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub shape: f64,
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl LossTerms {
    fn is_finite(&self) -> bool {
        self.total.is_finite() && self.sil.is_finite() && self.shape.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub code: Vec<f64>,
    pub pose: [f64; 3],
    /// Gradient on `(tx, ty, log_scale)`; zero when no similarity is used.
    pub similarity: [f64; 3],
}

/// Shared evaluation of the objective; the gradient is skipped when not
/// requested.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    model: &Autoencoder,
    gmm: &GmmModel,
    sil: &PointSet2,
    code: &[f64],
    pose: &Pose,
    similarity: Option<&Similarity2>,
    lambda: f64,
    want_grad: bool,
) -> Result<(LossTerms, Option<Gradient>), InferenceError> {
    if sil.is_empty() {
        return Err(InferenceError::EmptySilhouette);
    }
    let trace = model.decode_traced(code)?;
    let flat = trace.output().as_slice().expect("standard layout");
    let points: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let unscaled = project_points(&points, &pose.rotation_matrix());
    let mut proj = unscaled.clone();
    if let Some(s) = similarity {
        s.apply(&mut proj);
    }
    let (l_sil, g2) = chamfer_with_grad(&proj, sil.points(), ChamferOptions::default())?;
    let (l_shape, g_shape) = if want_grad {
        let (v, g) = gmm.nll_and_grad(code)?;
        (v, Some(g))
    } else {
        (gmm.nll(code)?, None)
    };
    let terms = LossTerms {
        total: l_sil + lambda * l_shape,
        sil: l_sil,
        shape: l_shape,
    };
    if !want_grad {
        return Ok((terms, None));
    }
    let (g2, g_sim) = match similarity {
        Some(s) => s.backward(&unscaled, &g2),
        None => (g2, [0.0; 3]),
    };
    let (g_points, g_pose) = project_grad(&points, pose, &g2)?;
    let mut g_code = model.decode_backward(&trace, &g_points)?;
    for (g, s) in g_code
        .iter_mut()
        .zip(g_shape.expect("computed with gradient"))
    {
        *g += lambda * s;
    }
    Ok((
        terms,
        Some(Gradient {
            code: g_code,
            pose: g_pose,
            similarity: g_sim,
        }),
    ))
}

/// `L_sil + λ·L_shape` and its two components.
pub fn total_loss(
    model: &Autoencoder,
    gmm: &GmmModel,
    sil: &PointSet2,
    code: &LatentCode,
    pose: &Pose,
    lambda: f64,
) -> Result<LossTerms, InferenceError> {
    model.check_code(code)?;
    Ok(evaluate(model, gmm, sil, code.values(), pose, None, lambda, false)?.0)
}

/// Objective and its gradient with respect to code, pose and (optionally)
/// the image-plane similarity. Chamfer correspondences are those of the
/// current iterate.
pub fn total_loss_grad(
    model: &Autoencoder,
    gmm: &GmmModel,
    sil: &PointSet2,
    code: &LatentCode,
    pose: &Pose,
    similarity: Option<&Similarity2>,
    lambda: f64,
) -> Result<(LossTerms, Gradient), InferenceError> {
    model.check_code(code)?;
    let (terms, grad) = evaluate(
        model,
        gmm,
        sil,
        code.values(),
        pose,
        similarity,
        lambda,
        true,
    )?;
    Ok((terms, grad.expect("requested")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    Plateau,
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub total: f64,
    pub sil: f64,
    pub shape: f64,
    pub lambda: f64,
}

/// Outcome of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub code: LatentCode,
    pub pose: Pose,
    pub similarity: Option<Similarity2>,
    /// Loss before every Adam step.
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective at the returned parameters with the final-phase weight.
    pub final_terms: LossTerms,
}

/// Runs Adam from `(init_code, init_pose)` until the iteration budget is
/// spent or the loss plateaus. A non-finite loss ends the run and is
/// reported through [`StopReason::NonFinite`].
pub fn run_single(
    model: &Autoencoder,
    gmm: &GmmModel,
    sil: &PointSet2,
    init_code: &LatentCode,
    init_pose: Pose,
    cfg: &InferenceConfig,
) -> Result<RunOutcome, InferenceError> {
    cfg.validate()?;
    model.check_code(init_code)?;
    if model.latent_dim() != gmm.dim() {
        return Err(InferenceError::DimensionMismatch {
            decoder: model.latent_dim(),
            prior: gmm.dim(),
        });
    }
    let names = [
        "latent".to_string(),
        "pose".to_string(),
        "similarity".to_string(),
    ];
    let mut code = init_code.values().to_vec();
    let mut angles = init_pose.angles();
    let mut sim = cfg.similarity.then(Similarity2::default);
    let mut code_opt = AdamState::new(AdamConfig::with_lr(cfg.latent_lr), &[code.len()]);
    let mut pose_opt = AdamState::new(AdamConfig::with_lr(cfg.pose_lr), &[3]);
    let mut sim_opt = AdamState::new(AdamConfig::with_lr(cfg.similarity_lr), &[3]);

    let weight = |high: bool| match (cfg.use_prior, high) {
        (false, _) => 0.0,
        (true, true) => cfg.lambda_high,
        (true, false) => cfg.lambda_low,
    };
    let mut high_phase = cfg.use_prior && cfg.lambda_high != cfg.lambda_low;
    let mut phase_start = 0;
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIterations;
    for t in 0..cfg.max_iterations {
        if high_phase && t >= cfg.switch_iteration {
            high_phase = false;
            phase_start = t;
        }
        let lambda = weight(high_phase);
        let pose = Pose::from_angles(angles);
        let (terms, grad) = evaluate(model, gmm, sil, &code, &pose, sim.as_ref(), lambda, true)?;
        let grad = grad.expect("requested");
        trace.push(TraceRow {
            iteration: t,
            total: terms.total,
            sil: terms.sil,
            shape: terms.shape,
            lambda,
        });
        if !terms.is_finite() || grad.code.iter().chain(&grad.pose).any(|v| !v.is_finite()) {
            stop = StopReason::NonFinite;
            break;
        }
        let w = cfg.plateau_window;
        if t >= phase_start + w {
            let before = trace[t - w].total;
            if (terms.total - before).abs() / before.abs().max(1e-12) < cfg.plateau_tolerance {
                if high_phase {
                    high_phase = false;
                    phase_start = t + 1;
                } else {
                    stop = StopReason::Plateau;
                    break;
                }
            }
        }
        code_opt.step(&mut [&mut code[..]], &[&grad.code[..]], &names[..1])?;
        pose_opt.step(&mut [&mut angles[..]], &[&grad.pose[..]], &names[1..2])?;
        if let Some(s) = sim.as_mut() {
            let mut v = [s.tx, s.ty, s.log_scale];
            sim_opt.step(&mut [&mut v[..]], &[&grad.similarity[..]], &names[2..])?;
            *s = Similarity2 {
                tx: v[0],
                ty: v[1],
                log_scale: v[2],
            };
        }
    }
    let iterations = trace.len();
    let pose = Pose::from_angles(angles);
    let final_terms = if stop == StopReason::NonFinite {
        LossTerms {
            total: f64::NAN,
            sil: f64::NAN,
            shape: f64::NAN,
        }
    } else {
        let (terms, _) = evaluate(
            model,
            gmm,
            sil,
            &code,
            &pose,
            sim.as_ref(),
            cfg.final_lambda(),
            false,
        )?;
        if !terms.is_finite() {
            stop = StopReason::NonFinite;
        }
        terms
    };
    let code = if code.iter().all(|v| v.is_finite()) {
        LatentCode::new(code)?
    } else {
        init_code.clone()
    };
    Ok(RunOutcome {
        code,
        pose,
        similarity: sim,
        trace,
        iterations,
        stop,
        final_terms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    /// Mixture component whose mean started this run.
    pub component: usize,
    #[serde(flatten)]
    pub outcome: RunOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub code: LatentCode,
    pub pose: Pose,
    pub similarity: Option<Similarity2>,
    pub final_terms: LossTerms,
    pub final_lambda: f64,
    /// Index into `restarts` of the selected run.
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
    #[serde(skip)]
    pub cloud: Option<PointCloud3>,
}

/// Runs one restart per mixture mean from the zero pose and keeps the one
/// with the lowest final objective. Ties go to the lower component index.
pub fn reconstruct(
    model: &Autoencoder,
    gmm: &GmmModel,
    sil: &PointSet2,
    cfg: &InferenceConfig,
) -> Result<InferenceResult, InferenceError> {
    let components: Vec<usize> = match cfg.restarts {
        RestartPolicy::AllMeans => (0..gmm.n_components()).collect(),
        RestartPolicy::HeaviestMean => {
            let w = gmm.weights();
            vec![(0..w.len()).fold(0, |b, k| if w[k] > w[b] { k } else { b })]
        }
    };
    let mut restarts = Vec::with_capacity(components.len());
    for &k in &components {
        let init = LatentCode::new(gmm.means()[k].clone())?;
        let outcome = run_single(model, gmm, sil, &init, Pose::IDENTITY, cfg)?;
        if outcome.stop == StopReason::NonFinite {
            log::warn!("restart from component {k} produced a non-finite loss");
        }
        restarts.push(RestartSummary {
            component: k,
            outcome,
        });
    }
    let best = restarts
        .iter()
        .enumerate()
        .filter(|(_, r)| r.outcome.stop != StopReason::NonFinite)
        .fold(None, |best: Option<(usize, f64)>, (i, r)| {
            let v = r.outcome.final_terms.total;
            match best {
                Some((_, b)) if b <= v => best,
                _ => Some((i, v)),
            }
        })
        .ok_or(InferenceError::AllRestartsFailed)?
        .0;
    let chosen = &restarts[best].outcome;
    let cloud = model.decode(&chosen.code)?;
    Ok(InferenceResult {
        code: chosen.code.clone(),
        pose: chosen.pose,
        similarity: chosen.similarity,
        final_terms: chosen.final_terms,
        final_lambda: cfg.final_lambda(),
        best_restart: best,
        restarts,
        cloud: Some(cloud),
    })
}

impl InferenceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Loss traces of every restart as CSV with columns
    /// `restart,iteration,total,sil,shape,lambda`.
    pub fn write_traces_csv(&self, path: impl AsRef<Path>) -> Result<(), InferenceError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "restart,iteration,total,sil,shape,lambda")?;
        for (i, r) in self.restarts.iter().enumerate() {
            for row in &r.outcome.trace {
                writeln!(
                    w,
                    "{i},{},{:e},{:e},{:e},{:e}",
                    row.iteration, row.total, row.sil, row.shape, row.lambda
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Architecture;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn tiny() -> (Autoencoder, GmmModel) {
        let arch = Architecture {
            latent_dim: 4,
            n_points: 32,
            point_widths: vec![8],
            head_widths: vec![8],
            decoder_widths: vec![16, 16],
        };
        let model = Autoencoder::random(&arch, &mut crate::seed::rng(5)).unwrap();
        let mut rng = crate::seed::rng(6);
        let means = (0..2)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let gmm = GmmModel::new(
            vec![0.5, 0.5],
            means,
            vec![DMatrix::identity(4, 4) * 0.5; 2],
            1e-6,
        )
        .unwrap();
        (model, gmm)
    }

    #[test]
    fn schedule_defaults() {
        let cfg = InferenceConfig::default();
        assert_eq!(lambda_at(&cfg, 0).unwrap(), 1.0);
        assert_eq!(lambda_at(&cfg, 499).unwrap(), 1.0);
        assert_eq!(lambda_at(&cfg, 500).unwrap(), 0.001);
        assert_eq!(lambda_at(&cfg, 999).unwrap(), 0.001);
        assert!(lambda_at(&cfg, 1000).is_err());
        let flat = InferenceConfig {
            lambda_high: 0.01,
            lambda_low: 0.01,
            ..cfg
        };
        assert!((0..1000).all(|t| lambda_at(&flat, t).unwrap() == 0.01));
    }

    #[test]
    fn config_validation() {
        let mut cfg = InferenceConfig::default();
        cfg.validate().unwrap();
        cfg.switch_iteration = 1001;
        assert!(cfg.validate().is_err());
        let cfg = InferenceConfig {
            lambda_low: 2.0,
            ..InferenceConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_lambda_is_pure_silhouette() {
        let (model, gmm) = tiny();
        let code = LatentCode::new(gmm.means()[0].clone()).unwrap();
        let sil = PointSet2::new(vec![[0.1, 0.2], [-0.3, 0.0]]).unwrap();
        let t = total_loss(&model, &gmm, &sil, &code, &Pose::new(0.2, 0.1, 0.0), 0.0).unwrap();
        assert_eq!(t.total, t.sil);
    }

    #[test]
    fn exact_silhouette_has_zero_loss_and_plateaus() {
        let (model, gmm) = tiny();
        let code = LatentCode::new(gmm.means()[1].clone()).unwrap();
        let cloud = model.decode(&code).unwrap();
        let sil = crate::pose::project(&cloud, &Pose::IDENTITY);
        let t = total_loss(&model, &gmm, &sil, &code, &Pose::IDENTITY, 1.0).unwrap();
        assert!(t.sil < 1e-12);
        let cfg = InferenceConfig {
            use_prior: false,
            ..InferenceConfig::default()
        };
        let run = run_single(&model, &gmm, &sil, &code, Pose::IDENTITY, &cfg).unwrap();
        assert_eq!(run.stop, StopReason::Plateau);
        assert!(run.iterations <= cfg.plateau_window + 1);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, gmm) = tiny();
        let mut rng = crate::seed::rng(7);
        let sil = PointSet2::new(
            (0..40)
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect(),
        )
        .unwrap();
        let mut checked = 0;
        for _ in 0..40 {
            let code: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pose = Pose::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let lc = LatentCode::new(code.clone()).unwrap();
            let (_, g) = total_loss_grad(&model, &gmm, &sil, &lc, &pose, None, 0.7).unwrap();
            let f = |c: &[f64], p: [f64; 3]| {
                total_loss(
                    &model,
                    &gmm,
                    &sil,
                    &LatentCode::new(c.to_vec()).unwrap(),
                    &Pose::from_angles(p),
                    0.7,
                )
                .unwrap()
                .total
            };
            let h = 1e-6;
            let mut fd = Vec::new();
            for i in 0..4 {
                let (mut a, mut b) = (code.clone(), code.clone());
                a[i] += h;
                b[i] -= h;
                fd.push((f(&a, pose.angles()) - f(&b, pose.angles())) / (2.0 * h));
            }
            for i in 0..3 {
                let (mut a, mut b) = (pose.angles(), pose.angles());
                a[i] += h;
                b[i] -= h;
                fd.push((f(&code, a) - f(&code, b)) / (2.0 * h));
            }
            let an: Vec<f64> = g.code.iter().chain(&g.pose).copied().collect();
            let err: f64 = an
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            // a correspondence switch or ReLU kink inside the stencil shows up
            // as a gross mismatch; smooth configurations agree tightly
            if err / norm < 1e-2 {
                assert!(err / norm < 1e-4, "{}", err / norm);
                checked += 1;
            }
        }
        assert!(checked >= 30, "only {checked} smooth configurations");
    }

    #[test]
    fn reconstruct_keeps_every_restart_and_picks_minimum() {
        let (model, gmm) = tiny();
        let (a, b) = (&gmm.means()[0], &gmm.means()[1]);
        let code =
            LatentCode::new(a.iter().zip(b).map(|(x, y)| 0.7 * x + 0.3 * y).collect()).unwrap();
        let cloud = model.decode(&code).unwrap();
        let sil = crate::pose::project(&cloud, &Pose::new(0.3, 0.1, 0.0));
        let cfg = InferenceConfig {
            max_iterations: 60,
            switch_iteration: 30,
            ..InferenceConfig::default()
        };
        let res = reconstruct(&model, &gmm, &sil, &cfg).unwrap();
        assert_eq!(res.restarts.len(), 2);
        let best = res.restarts[res.best_restart].outcome.final_terms.total;
        assert!(res
            .restarts
            .iter()
            .all(|r| best <= r.outcome.final_terms.total));
        let again = reconstruct(&model, &gmm, &sil, &cfg).unwrap();
        assert_eq!(res.to_json(), again.to_json());
    }
}
