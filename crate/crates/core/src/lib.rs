//! Single-view 3D shape reconstruction by optimizing a latent shape code and
//! an object pose against a silhouette, regularized by a Gaussian mixture
//! prior fitted over the latent space of a point-cloud autoencoder.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: point clouds, triangle meshes, surface sampling,
//!   normalization and procedural shape families.
//! - [`metrics`]: Chamfer distances (2D/3D) and Earth Mover's Distance.
//! - [`neural`]: the point-cloud autoencoder, reverse-mode gradients, Adam
//!   and training.
//! - [`prior`]: Gaussian mixture fitting by EM and the negative
//!   log-likelihood used as a shape prior.
//! - [`pose`]: Euler-angle rotations and orthographic projection.
//! - [`inference`]: the joint latent/pose optimization with restarts.
//! - [`masks`]: binary silhouette masks (PGM), sampling and rasterization.
//! - [`harness`]: configuration, synthetic benchmark and CLI commands.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod harness;
pub mod hexfloat;
pub mod inference;
pub mod masks;
pub mod metrics;
pub mod neural;
pub mod pose;
pub mod prior;
pub mod seed;

pub use geometry::{PointCloud3, PointSet2, TriMesh};
pub use inference::{InferenceConfig, InferenceResult};
pub use neural::{Autoencoder, LatentCode};
pub use pose::Pose;
pub use prior::GmmModel;
