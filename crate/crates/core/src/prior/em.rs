use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gmm::{logsumexp, GmmModel};
use super::PriorError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceType {
    #[default]
    Full,
    Diagonal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// k-means++ seeding refined by Lloyd iterations.
    #[default]
    KmeansPlusPlus,
    /// K distinct data points drawn uniformly.
    RandomPoints,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop once the mean per-sample log-likelihood improves by less than this.
    pub tolerance: f64,
    /// Covariance floor relative to the mean per-dimension data variance;
    /// every covariance gets `ε·I` added with `ε = floor · mean variance`.
    pub covariance_floor: f64,
    pub covariance: CovarianceType,
    pub init: InitMethod,
    /// How many component re-initializations are tolerated before fitting
    /// fails.
    pub max_reinit: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            k: 5,
            max_iterations: 500,
            tolerance: 1e-10,
            covariance_floor: 1e-6,
            covariance: CovarianceType::Full,
            init: InitMethod::KmeansPlusPlus,
            max_reinit: 5,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn with_k(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        if self.k == 0 {
            return Err(PriorError::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.covariance_floor > 0.0) || !(self.tolerance >= 0.0) {
            return Err(PriorError::InvalidConfig(
                "covariance floor must be positive, tolerance nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    /// Mean per-sample log-likelihood after initialization and after every
    /// EM iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, component)` for every collapsed component that was
    /// re-initialized.
    pub reinitialized: Vec<(usize, usize)>,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<DMatrix<f64>>,
}

fn covariance(
    data: &[&[f64]],
    resp: impl Fn(usize) -> f64,
    mean: &[f64],
    mass: f64,
    eps: f64,
    kind: CovarianceType,
) -> DMatrix<f64> {
    let d = mean.len();
    let mut c = DMatrix::zeros(d, d);
    for (i, x) in data.iter().enumerate() {
        let r = resp(i);
        if r == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in 0..=a {
                c[(a, b)] += r * da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = if kind == CovarianceType::Diagonal && a != b {
                0.0
            } else {
                c[(a, b)] / mass
            };
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
        c[(a, a)] += eps;
    }
    c
}

fn weighted_mean(data: &[&[f64]], resp: impl Fn(usize) -> f64, mass: f64) -> Vec<f64> {
    let mut m = vec![0.0; data[0].len()];
    for (i, x) in data.iter().enumerate() {
        let r = resp(i);
        for (a, v) in m.iter_mut().zip(x.iter()) {
            *a += r * v;
        }
    }
    m.iter_mut().for_each(|v| *v /= mass);
    m
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dist2(c, x)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

fn kmeans_pp(data: &[&[f64]], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].to_vec()];
    while centers.len() < k {
        let d2: Vec<f64> = data.iter().map(|x| nearest(&centers, x).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d2.iter()
                .position(|&w| {
                    u -= w;
                    u < 0.0 && w > 0.0
                })
                .unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            rng.random_range(0..n)
        };
        centers.push(data[pick].to_vec());
    }
    for _ in 0..100 {
        let assign: Vec<usize> = data.iter().map(|x| nearest(&centers, x).0).collect();
        let mut moved = false;
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = data
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == j)
                .map(|(x, _)| *x)
                .collect();
            if members.is_empty() {
                continue;
            }
            let m = weighted_mean(&members, |_| 1.0, members.len() as f64);
            moved |= m != *c;
            *c = m;
        }
        if !moved {
            break;
        }
    }
    centers
}

fn initialize(data: &[&[f64]], cfg: &EmConfig, eps: f64, global: &DMatrix<f64>) -> Params {
    let mut rng = crate::seed::stream(cfg.seed, "em-init", 0);
    let means = match cfg.init {
        InitMethod::KmeansPlusPlus => kmeans_pp(data, cfg.k, &mut rng),
        InitMethod::RandomPoints => rand::seq::index::sample(&mut rng, data.len(), cfg.k)
            .into_iter()
            .map(|i| data[i].to_vec())
            .collect(),
    };
    let assign: Vec<usize> = data.iter().map(|x| nearest(&means, x).0).collect();
    let covs = (0..cfg.k)
        .map(|j| {
            let count = assign.iter().filter(|&&a| a == j).count();
            if count < 2 {
                return global.clone();
            }
            let ind = |i: usize| if assign[i] == j { 1.0 } else { 0.0 };
            covariance(data, ind, &means[j], count as f64, eps, cfg.covariance)
        })
        .collect();
    Params {
        weights: vec![1.0 / cfg.k as f64; cfg.k],
        means,
        covs,
    }
}

fn build(p: &Params, eps: f64) -> Result<GmmModel, PriorError> {
    let total: f64 = p.weights.iter().sum();
    let mut weights: Vec<f64> = p.weights.iter().map(|w| w / total).collect();
    // absorb the rounding residue so the weights sum to one
    let rest: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - rest;
    GmmModel::new(weights, p.means.clone(), p.covs.clone(), eps)
}

/// Fits a mixture by expectation-maximization.
///
/// Responsibilities are computed with log-sum-exp. When a component's
/// responsibility mass drops below one sample it is re-initialized at the
/// worst-explained datum (lowest log-likelihood under the current model)
/// with the global data covariance; more than `max_reinit` such events is an
/// error.
pub fn fit_gmm<T: AsRef<[f64]>>(
    latents: &[T],
    cfg: &EmConfig,
) -> Result<(GmmModel, EmReport), PriorError> {
    cfg.validate()?;
    let data: Vec<&[f64]> = latents.iter().map(AsRef::as_ref).collect();
    if data.len() < cfg.k {
        return Err(PriorError::TooFewSamples {
            samples: data.len(),
            k: cfg.k,
        });
    }
    let d = data[0].len();
    if d == 0 {
        return Err(PriorError::InvalidConfig("latent dimension is zero".into()));
    }
    if let Some(x) = data.iter().find(|x| x.len() != d) {
        return Err(PriorError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if data.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(PriorError::NonFinite);
    }
    let n = data.len() as f64;
    let center = weighted_mean(&data, |_| 1.0, n);
    let raw = covariance(&data, |_| 1.0, &center, n, 0.0, CovarianceType::Full);
    let mean_var = raw.trace() / d as f64;
    let eps = cfg.covariance_floor * if mean_var > 0.0 { mean_var } else { 1.0 };
    let mut global = raw.clone();
    for a in 0..d {
        global[(a, a)] += eps;
    }
    if cfg.covariance == CovarianceType::Diagonal {
        global = DMatrix::from_diagonal(&global.diagonal());
    }

    let mut params = initialize(&data, cfg, eps, &global);
    let mut report = EmReport {
        log_likelihood: Vec::new(),
        iterations: 0,
        converged: false,
        reinitialized: Vec::new(),
    };
    let mut model = build(&params, eps)?;
    for iteration in 0..=cfg.max_iterations {
        // E-step
        let mut resp = vec![vec![0.0; cfg.k]; data.len()];
        let mut ll = Vec::with_capacity(data.len());
        for (x, r) in data.iter().zip(resp.iter_mut()) {
            let logs = model.component_log_densities(x);
            let lse = logsumexp(&logs);
            for (rk, lk) in r.iter_mut().zip(&logs) {
                *rk = (lk - lse).exp();
            }
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            ll.push(lse);
        }
        let mean_ll = ll.iter().sum::<f64>() / n;
        if let Some(&prev) = report.log_likelihood.last() {
            if report
                .reinitialized
                .last()
                .is_none_or(|&(it, _)| it + 1 < iteration)
                && mean_ll - prev < cfg.tolerance
            {
                report.log_likelihood.push(mean_ll);
                report.converged = true;
                break;
            }
        }
        report.log_likelihood.push(mean_ll);
        if iteration == cfg.max_iterations {
            break;
        }
        report.iterations = iteration + 1;

        // M-step
        for j in 0..cfg.k {
            let mass: f64 = resp.iter().map(|r| r[j]).sum();
            if mass < 1.0 {
                if report.reinitialized.len() >= cfg.max_reinit {
                    return Err(PriorError::RepeatedCollapse {
                        component: j,
                        events: report.reinitialized.len() + 1,
                    });
                }
                let worst = ll
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |b, (i, &v)| if v < b.1 { (i, v) } else { b },
                    )
                    .0;
                log::warn!("EM: component {j} collapsed at iteration {iteration}; re-initialized at datum {worst}");
                report.reinitialized.push((iteration, j));
                params.means[j] = data[worst].to_vec();
                params.covs[j] = global.clone();
                params.weights[j] = 1.0 / cfg.k as f64;
                continue;
            }
            let mean = weighted_mean(&data, |i| resp[i][j], mass);
            params.covs[j] = covariance(&data, |i| resp[i][j], &mean, mass, eps, cfg.covariance);
            params.means[j] = mean;
            params.weights[j] = mass / n;
        }
        model = build(&params, eps)?;
    }
    Ok((model, report))
}
