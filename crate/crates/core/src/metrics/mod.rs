//! Chamfer distances, Earth Mover's Distance and the exact assignment oracle.
//!
//! Chamfer distances use squared Euclidean nearest-neighbor distances. With
//! the default [`ChamferReduction::Mean`] each direction is averaged over its
//! source set and the two directions are added:
//!
//! ```text
//! CD(A, B) = 1/|A| Σ_a min_b ‖a − b‖² + 1/|B| Σ_b min_a ‖a − b‖²
//! ```

mod chamfer;
mod emd;
mod nn;

pub use chamfer::{
    chamfer, chamfer2, chamfer3, chamfer3_grad, chamfer_with_grad, ChamferOptions, ChamferReduction,
};
pub use emd::{
    auction_assignment, emd_approx, emd_approx_with, emd_exact, hungarian, EmdOptions,
    EMD_EXACT_MAX,
};
pub use nn::{nearest_neighbors, NeighborSearch};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PointCloud3;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("point set is empty")]
    Empty,
    #[error("set sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("exact EMD supports at most {max} points, got {got}")]
    TooLarge { got: usize, max: usize },
}

/// Chamfer distance and EMD between a reconstruction and a reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub emd: f64,
}

/// Computes both metrics; EMD resamples the larger cloud when sizes differ.
pub fn evaluate(
    reconstruction: &PointCloud3,
    reference: &PointCloud3,
) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        cd: chamfer3(reconstruction, reference)?,
        emd: emd_approx_with(reconstruction, reference, EmdOptions { resample: true })?,
    })
}
