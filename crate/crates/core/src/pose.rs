//! Euler-angle object rotation and orthographic projection.
//!
//! The rotation is `R = R_z(tilt) · R_x(elevation) · R_y(azimuth)` with the
//! elementary matrices
//!
//! ```text
//! R_y(a) = [[ cos a, 0, sin a], [0, 1, 0], [-sin a, 0, cos a]]
//! R_x(e) = [[1, 0, 0], [0, cos e, -sin e], [0, sin e, cos e]]
//! R_z(t) = [[cos t, -sin t, 0], [sin t, cos t, 0], [0, 0, 1]]
//! ```
//!
//! Projection is orthographic, `K = [[1, 0, 0], [0, 1, 0]]`: the rotated
//! z coordinate is dropped. Gimbal lock needs no special handling because
//! the optimizer only consumes gradients, which stay finite everywhere.

use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloud3, PointSet2};

pub type Mat3 = [[f64; 3]; 3];

/// Object rotation in radians. Angles are unrestricted and wrap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRecord", from = "PoseRecord")]
pub struct Pose {
    pub azimuth: f64,
    pub elevation: f64,
    pub tilt: f64,
}

/// On-disk form: degrees for reading, radians for exact reloading.
#[derive(Serialize, Deserialize)]
struct PoseRecord {
    azimuth_deg: f64,
    elevation_deg: f64,
    tilt_deg: f64,
    azimuth_rad: f64,
    elevation_rad: f64,
    tilt_rad: f64,
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        Self {
            azimuth_deg: p.azimuth.to_degrees(),
            elevation_deg: p.elevation.to_degrees(),
            tilt_deg: p.tilt.to_degrees(),
            azimuth_rad: p.azimuth,
            elevation_rad: p.elevation,
            tilt_rad: p.tilt,
        }
    }
}

impl From<PoseRecord> for Pose {
    fn from(r: PoseRecord) -> Self {
        Pose::new(r.azimuth_rad, r.elevation_rad, r.tilt_rad)
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        azimuth: 0.0,
        elevation: 0.0,
        tilt: 0.0,
    };

    pub fn new(azimuth: f64, elevation: f64, tilt: f64) -> Self {
        Self {
            azimuth,
            elevation,
            tilt,
        }
    }

    pub fn from_degrees(azimuth: f64, elevation: f64, tilt: f64) -> Self {
        Self::new(
            azimuth.to_radians(),
            elevation.to_radians(),
            tilt.to_radians(),
        )
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.azimuth, self.elevation, self.tilt]
    }

    pub fn from_angles(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.angles().iter().all(|v| v.is_finite())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        rotation_matrix(self)
    }
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn d_rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]]
}

fn d_rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]]
}

fn d_rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn rotation_matrix(pose: &Pose) -> Mat3 {
    mat_mul(
        &rot_z(pose.tilt),
        &mat_mul(&rot_x(pose.elevation), &rot_y(pose.azimuth)),
    )
}

/// Derivatives of the rotation with respect to azimuth, elevation and tilt.
pub fn rotation_derivatives(pose: &Pose) -> [Mat3; 3] {
    let (ry, rx, rz) = (rot_y(pose.azimuth), rot_x(pose.elevation), rot_z(pose.tilt));
    [
        mat_mul(&rz, &mat_mul(&rx, &d_rot_y(pose.azimuth))),
        mat_mul(&rz, &mat_mul(&d_rot_x(pose.elevation), &ry)),
        mat_mul(&d_rot_z(pose.tilt), &mat_mul(&rx, &ry)),
    ]
}

/// Applies the first two rows of `r` to every point.
pub fn project_points(points: &[[f64; 3]], r: &Mat3) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|p| {
            [
                r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
                r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            ]
        })
        .collect()
}

pub fn project(cloud: &PointCloud3, pose: &Pose) -> PointSet2 {
    PointSet2::new(project_points(cloud.points(), &pose.rotation_matrix()))
        .expect("rotation of finite points is finite")
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("upstream gradient has {got} rows, expected {expected}")]
pub struct ShapeMismatch {
    pub expected: usize,
    pub got: usize,
}

/// Pulls a gradient on projected 2D points back to the 3D points and to the
/// three pose angles.
pub fn project_grad(
    points: &[[f64; 3]],
    pose: &Pose,
    upstream: &[[f64; 2]],
) -> Result<(Vec<[f64; 3]>, [f64; 3]), ShapeMismatch> {
    if points.len() != upstream.len() {
        return Err(ShapeMismatch {
            expected: points.len(),
            got: upstream.len(),
        });
    }
    let r = pose.rotation_matrix();
    let dr = rotation_derivatives(pose);
    let mut angle_grad = [0.0; 3];
    let point_grad = points
        .iter()
        .zip(upstream)
        .map(|(p, u)| {
            for (g, d) in angle_grad.iter_mut().zip(&dr) {
                for (row, uk) in d.iter().take(2).zip(u) {
                    *g += uk * (row[0] * p[0] + row[1] * p[1] + row[2] * p[2]);
                }
            }
            [
                u[0] * r[0][0] + u[1] * r[1][0],
                u[0] * r[0][1] + u[1] * r[1][1],
                u[0] * r[0][2] + u[1] * r[1][2],
            ]
        })
        .collect();
    Ok((point_grad, angle_grad))
}

/// Optional image-plane similarity `q = exp(log_scale) · p + (tx, ty)`
/// applied after projection. This goes beyond the plain orthographic model
/// and is off unless requested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Similarity2 {
    pub tx: f64,
    pub ty: f64,
    pub log_scale: f64,
}

impl Similarity2 {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn apply(&self, points: &mut [[f64; 2]]) {
        let s = self.scale();
        for p in points {
            *p = [s * p[0] + self.tx, s * p[1] + self.ty];
        }
    }

    /// Given the unscaled points and the gradient on the transformed points,
    /// returns the gradient on the unscaled points and on (tx, ty, log_scale).
    pub fn backward(
        &self,
        points: &[[f64; 2]],
        upstream: &[[f64; 2]],
    ) -> (Vec<[f64; 2]>, [f64; 3]) {
        let s = self.scale();
        let mut g = [0.0; 3];
        let inner = points
            .iter()
            .zip(upstream)
            .map(|(p, u)| {
                g[0] += u[0];
                g[1] += u[1];
                g[2] += s * (u[0] * p[0] + u[1] * p[1]);
                [s * u[0], s * u[1]]
            })
            .collect();
        (inner, g)
    }
}
