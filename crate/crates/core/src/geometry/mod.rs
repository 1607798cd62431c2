//! Point clouds, triangle meshes, surface sampling and procedural shapes.

mod cloud;
mod families;
mod io;
mod mesh;
mod sampling;

pub use cloud::{
    normalize_cloud, normalize_cloud_with_transform, NormalizeTransform, PointCloud3, PointSet2,
};
pub use families::{generate_shape, ShapeFamily, ShapeFamilySpec};
pub use io::{load_cloud, load_ply, load_xy, load_xyz, save_ply, save_xy, save_xyz};
pub use mesh::{load_mesh, parse_obj, parse_off, save_off, TriMesh, Triangulation};
pub use sampling::{sample_surface, sample_surface_with_faces};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point set is empty")]
    Empty,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("degenerate cloud: all points coincide")]
    Degenerate,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but mesh has {vertices} vertices")]
    FaceIndex {
        face: usize,
        index: usize,
        vertices: usize,
    },
    #[error("face {0} repeats a vertex index")]
    RepeatedIndex(usize),
    #[error("mesh has zero total surface area")]
    ZeroArea,
    #[error("unsupported file format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("{family} expects {expected} parameters, got {got}")]
    ParamCount {
        family: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter {index} ({name}) = {value} outside [{lo}, {hi}]")]
    ParamRange {
        index: usize,
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid range for parameter {0}: empty interval")]
    EmptyInterval(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn parse_error(path: &str, line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}
