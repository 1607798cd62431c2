//! Finite-difference gradient checks shared by the integration tests and the
//! acceptance suite. Each check draws random configurations until it has
//! verified `want` smooth ones, skipping configurations whose stencil
//! straddles a ReLU kink, a max-pool tie or a Chamfer correspondence switch.
#![allow(dead_code)]

use latentfit::geometry::{PointCloud3, PointSet2};
use latentfit::inference::{total_loss, total_loss_grad};
use latentfit::neural::{Activation, Architecture, Autoencoder, Mlp};
use latentfit::pose::{project_grad, project_points, Pose};
use latentfit::prior::GmmModel;
use latentfit::seed;
use latentfit::LatentCode;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradStats {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl GradStats {
    pub fn passes(&self, want: usize, tol: f64) -> bool {
        self.checked >= want && self.worst < tol
    }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

fn central(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let a = f(&p);
            p[i] = x[i] - h;
            let b = f(&p);
            p[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

/// Central differences at step `H`, or `None` when they disagree with the
/// same estimate at `H/4`: the function is not smooth across the stencil.
pub fn smooth_fd(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Option<Vec<f64>> {
    let coarse = central(&mut f, x, H);
    let fine = central(&mut f, x, H / 4.0);
    (rel_err(&fine, &coarse) < 1e-5).then_some(coarse)
}

fn record(stats: &mut GradStats, analytic: &[f64], fd: Option<Vec<f64>>) {
    match fd {
        Some(fd) => {
            stats.checked += 1;
            stats.worst = stats.worst.max(rel_err(analytic, &fd));
        }
        None => stats.skipped += 1,
    }
}

fn run(want: usize, seed: u64, mut one: impl FnMut(&mut ChaCha8Rng, &mut GradStats)) -> GradStats {
    let mut stats = GradStats {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };
    let mut rng = seed::rng(seed);
    while stats.checked < want && stats.checked + stats.skipped < 4 * want {
        one(&mut rng, &mut stats);
    }
    stats
}

fn uniform(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn cloud(rng: &mut impl Rng, n: usize) -> PointCloud3 {
    PointCloud3::new(
        (0..n)
            .map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

pub fn tiny_arch() -> Architecture {
    Architecture {
        latent_dim: 4,
        n_points: 12,
        point_widths: vec![6, 8],
        head_widths: vec![6],
        decoder_widths: vec![8, 10],
    }
}

fn flat_params(mlp: &Mlp) -> Vec<f64> {
    mlp.clone()
        .blocks_mut()
        .iter()
        .flat_map(|b| b.iter().copied())
        .collect()
}

fn set_params(mlp: &mut Mlp, values: &[f64]) {
    let mut it = values.iter();
    for block in mlp.blocks_mut() {
        for v in block.iter_mut() {
            *v = *it.next().unwrap();
        }
    }
}

/// Two-layer, width-4 MLP: parameter and input gradients of `⟨u, f(x)⟩`.
pub fn check_mlp(want: usize, seed: u64) -> GradStats {
    run(want, seed, |rng, stats| {
        let mlp = Mlp::random(&[3, 4, 4], Activation::Relu, Activation::Identity, rng);
        let x = Array2::from_shape_vec((5, 3), uniform(rng, 15, 1.0)).unwrap();
        let u = Array2::from_shape_vec((5, 4), uniform(rng, 20, 1.0)).unwrap();
        let trace = mlp.forward_traced(x.clone()).unwrap();
        if mlp.near_kink(&trace, 1e-4) {
            stats.skipped += 1;
            return;
        }
        let (g, gi) = mlp.backward(&trace, u.clone(), true).unwrap();
        let mut analytic: Vec<f64> = g.blocks().iter().flat_map(|b| b.iter().copied()).collect();
        analytic.extend(gi.unwrap().iter());
        let mut theta = flat_params(&mlp);
        let np = theta.len();
        theta.extend(x.iter());
        let fd = smooth_fd(
            |t| {
                let mut m = mlp.clone();
                set_params(&mut m, &t[..np]);
                let xi = Array2::from_shape_vec((5, 3), t[np..].to_vec()).unwrap();
                (m.forward(xi.view()).unwrap() * &u).sum()
            },
            &theta,
        );
        record(stats, &analytic, fd);
    })
}

/// Decoder parameter gradients of `⟨u, dec(l)⟩`.
pub fn check_decoder_params(want: usize, seed: u64) -> GradStats {
    run(want, seed, |rng, stats| {
        let model = Autoencoder::random(&tiny_arch(), rng).unwrap();
        let code = uniform(rng, 4, 1.0);
        let u = Array2::from_shape_vec((1, 36), uniform(rng, 36, 1.0)).unwrap();
        let trace = model.decode_traced(&code).unwrap();
        if model.decoder.near_kink(&trace, 1e-4) {
            stats.skipped += 1;
            return;
        }
        let (g, _) = model.decoder.backward(&trace, u.clone(), false).unwrap();
        let analytic: Vec<f64> = g.blocks().iter().flat_map(|b| b.iter().copied()).collect();
        let fd = smooth_fd(
            |t| {
                let mut m = model.decoder.clone();
                set_params(&mut m, t);
                (m.forward_traced(Array2::from_shape_vec((1, 4), code.clone()).unwrap())
                    .unwrap()
                    .output()
                    * &u)
                    .sum()
            },
            &flat_params(&model.decoder),
        );
        record(stats, &analytic, fd);
    })
}

/// Latent-input gradient of `⟨u, dec(l)⟩`.
pub fn check_latent_input(want: usize, seed: u64) -> GradStats {
    run(want, seed, |rng, stats| {
        let model = Autoencoder::random(&tiny_arch(), rng).unwrap();
        let code = uniform(rng, 4, 1.0);
        let u: Vec<[f64; 3]> = (0..12)
            .map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let trace = model.decode_traced(&code).unwrap();
        if model.decoder.near_kink(&trace, 1e-4) {
            stats.skipped += 1;
            return;
        }
        let analytic = model.decode_backward(&trace, &u).unwrap();
        let fd = smooth_fd(
            |c| {
                let out = model.decode(&LatentCode::new(c.to_vec()).unwrap()).unwrap();
                out.points()
                    .iter()
                    .zip(&u)
                    .map(|(p, w)| p[0] * w[0] + p[1] * w[1] + p[2] * w[2])
                    .sum()
            },
            &code,
        );
        record(stats, &analytic, fd);
    })
}

/// Encoder parameter gradients of `⟨u, enc(S)⟩` through the max pool.
pub fn check_encoder_params(want: usize, seed: u64) -> GradStats {
    run(want, seed, |rng, stats| {
        let model = Autoencoder::random(&tiny_arch(), rng).unwrap();
        let s = cloud(rng, 10);
        let u = Array2::from_shape_vec((1, 4), uniform(rng, 4, 1.0)).unwrap();
        let enc = &model.encoder;
        let trace = enc.encode_traced(&[&s]).unwrap();
        if enc.near_kink(&trace, 1e-4) {
            stats.skipped += 1;
            return;
        }
        let g = enc.backward(&trace, u.clone()).unwrap();
        let analytic: Vec<f64> = g
            .point
            .blocks()
            .iter()
            .chain(g.head.blocks().iter())
            .flat_map(|b| b.iter().copied())
            .collect();
        let mut theta = flat_params(&enc.point);
        let np = theta.len();
        theta.extend(flat_params(&enc.head));
        let fd = smooth_fd(
            |t| {
                let mut e = enc.clone();
                set_params(&mut e.point, &t[..np]);
                set_params(&mut e.head, &t[np..]);
                (e.encode_batch(&[&s]).unwrap() * &u).sum()
            },
            &theta,
        );
        record(stats, &analytic, fd);
    })
}

pub fn random_gmm(rng: &mut impl Rng, k: usize, d: usize) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let rest: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - rest;
    let means = (0..k).map(|_| uniform(rng, d, 2.0)).collect();
    let covs = (0..k)
        .map(|_| {
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
            &a * a.transpose() + DMatrix::identity(d, d) * 0.3
        })
        .collect();
    GmmModel::new(weights, means, covs, 1e-6).unwrap()
}

pub fn check_gmm_nll(want: usize, seed: u64) -> GradStats {
    run(want, seed, |rng, stats| {
        let k = rng.random_range(1..5);
        let d = rng.random_range(1..7);
        let gmm = random_gmm(rng, k, d);
        let x = uniform(rng, d, 3.0);
        let analytic = gmm.nll_grad(&x).unwrap();
        record(stats, &analytic, smooth_fd(|y| gmm.nll(y).unwrap(), &x));
    })
}

pub fn check_pose(want: usize, seed: u64) -> GradStats {
    run(want, seed, |rng, stats| {
        let pts = cloud(rng, 8);
        let up: Vec<[f64; 2]> = (0..8)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let angles = [0, 1, 2].map(|_| rng.random_range(-3.0..3.0));
        let (_, analytic) = project_grad(pts.points(), &Pose::from_angles(angles), &up).unwrap();
        let fd = smooth_fd(
            |a| {
                let r = Pose::from_angles([a[0], a[1], a[2]]).rotation_matrix();
                project_points(pts.points(), &r)
                    .iter()
                    .zip(&up)
                    .map(|(q, u)| q[0] * u[0] + q[1] * u[1])
                    .sum()
            },
            &angles,
        );
        record(stats, &analytic, fd);
    })
}

/// Gradient of `L_sil + λ·L_shape` with respect to code and pose.
pub fn check_objective(want: usize, seed: u64) -> GradStats {
    let mut setup = seed::rng(seed ^ 0x5eed);
    let model = Autoencoder::random(&tiny_arch(), &mut setup).unwrap();
    let gmm = random_gmm(&mut setup, 3, 4);
    run(want, seed, |rng, stats| {
        let sil = PointSet2::new(
            (0..30)
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect(),
        )
        .unwrap();
        let code = uniform(rng, 4, 1.0);
        let angles = [0, 1, 2].map(|_| rng.random_range(-1.5..1.5));
        let lambda = rng.random_range(0.0..1.0);
        let lc = LatentCode::new(code.clone()).unwrap();
        if model
            .decoder
            .near_kink(&model.decode_traced(&code).unwrap(), 1e-4)
        {
            stats.skipped += 1;
            return;
        }
        let (_, g) = total_loss_grad(
            &model,
            &gmm,
            &sil,
            &lc,
            &Pose::from_angles(angles),
            None,
            lambda,
        )
        .unwrap();
        let analytic: Vec<f64> = g.code.iter().chain(&g.pose).copied().collect();
        let mut x = code.clone();
        x.extend(angles);
        let fd = smooth_fd(
            |v| {
                let c = LatentCode::new(v[..4].to_vec()).unwrap();
                total_loss(
                    &model,
                    &gmm,
                    &sil,
                    &c,
                    &Pose::from_angles([v[4], v[5], v[6]]),
                    lambda,
                )
                .unwrap()
                .total
            },
            &x,
        );
        record(stats, &analytic, fd);
    })
}
