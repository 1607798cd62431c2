use super::nn::{nearest_neighbors, NeighborSearch};
use super::MetricError;
use crate::geometry::{PointCloud3, PointSet2};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChamferReduction {
    /// Average each direction over its source set.
    #[default]
    Mean,
    /// Raw double sum, no normalization.
    Sum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChamferOptions {
    pub reduction: ChamferReduction,
    pub search: NeighborSearch,
}

fn weights(opts: ChamferOptions, na: usize, nb: usize) -> (f64, f64) {
    match opts.reduction {
        ChamferReduction::Mean => (1.0 / na as f64, 1.0 / nb as f64),
        ChamferReduction::Sum => (1.0, 1.0),
    }
}

fn directional<const D: usize>(from: &[[f64; D]], to: &[[f64; D]], search: NeighborSearch) -> f64 {
    nearest_neighbors(from, to, search)
        .iter()
        .map(|&(_, d)| d)
        .sum()
}

/// Symmetric Chamfer distance between two point sets of any dimension.
pub fn chamfer<const D: usize>(
    a: &[[f64; D]],
    b: &[[f64; D]],
    opts: ChamferOptions,
) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    let (wa, wb) = weights(opts, a.len(), b.len());
    Ok(wa * directional(a, b, opts.search) + wb * directional(b, a, opts.search))
}

/// Chamfer distance together with its gradient with respect to the points of
/// `a`. Nearest-neighbor correspondences are held fixed at their current
/// assignment, which is the exact gradient wherever they are unique.
pub fn chamfer_with_grad<const D: usize>(
    a: &[[f64; D]],
    b: &[[f64; D]],
    opts: ChamferOptions,
) -> Result<(f64, Vec<[f64; D]>), MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    let (wa, wb) = weights(opts, a.len(), b.len());
    let ab = nearest_neighbors(a, b, opts.search);
    let ba = nearest_neighbors(b, a, opts.search);
    let mut grad = vec![[0.0; D]; a.len()];
    let mut forward = 0.0;
    for (i, &(j, d)) in ab.iter().enumerate() {
        forward += d;
        for k in 0..D {
            grad[i][k] += 2.0 * wa * (a[i][k] - b[j][k]);
        }
    }
    let mut backward = 0.0;
    for (j, &(i, d)) in ba.iter().enumerate() {
        backward += d;
        for k in 0..D {
            grad[i][k] += 2.0 * wb * (a[i][k] - b[j][k]);
        }
    }
    Ok((wa * forward + wb * backward, grad))
}

pub fn chamfer3(a: &PointCloud3, b: &PointCloud3) -> Result<f64, MetricError> {
    chamfer(a.points(), b.points(), ChamferOptions::default())
}

pub fn chamfer2(a: &PointSet2, b: &PointSet2) -> Result<f64, MetricError> {
    chamfer(a.points(), b.points(), ChamferOptions::default())
}

/// Gradient of [`chamfer3`] with respect to the coordinates of `a`.
pub fn chamfer3_grad(a: &PointCloud3, b: &PointCloud3) -> Result<Vec<[f64; 3]>, MetricError> {
    chamfer_with_grad(a.points(), b.points(), ChamferOptions::default()).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c3(p: Vec<[f64; 3]>) -> PointCloud3 {
        PointCloud3::new(p).unwrap()
    }

    #[test]
    fn single_point_cases() {
        assert_eq!(
            chamfer3(&c3(vec![[0.0; 3]]), &c3(vec![[1.0, 0.0, 0.0]])).unwrap(),
            2.0
        );
        let a = PointSet2::new(vec![[0.0, 0.0]]).unwrap();
        let b = PointSet2::new(vec![[0.0, 3.0]]).unwrap();
        assert_eq!(chamfer2(&a, &b).unwrap(), 18.0);
        assert_eq!(chamfer2(&a, &a).unwrap(), 0.0);
        let g = chamfer3_grad(&c3(vec![[0.0; 3]]), &c3(vec![[1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(g, vec![[-4.0, 0.0, 0.0]]);
    }

    #[test]
    fn sum_reduction_is_unnormalized() {
        let a = [[0.0, 0.0], [2.0, 0.0]];
        let b = [[0.0, 1.0]];
        let opts = ChamferOptions {
            reduction: ChamferReduction::Sum,
            ..Default::default()
        };
        // a→b: 1 + 5, b→a: 1
        assert_eq!(chamfer(&a, &b, opts).unwrap(), 7.0);
        assert_eq!(
            chamfer(&a, &b, ChamferOptions::default()).unwrap(),
            3.0 + 1.0
        );
    }

    #[test]
    fn empty_sets_rejected() {
        let e: [[f64; 2]; 0] = [];
        assert_eq!(
            chamfer(&e, &[[0.0, 0.0]], ChamferOptions::default()),
            Err(MetricError::Empty)
        );
    }

    #[test]
    fn identical_sets_have_zero_gradient() {
        let a = c3(vec![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0], [0.0, 0.0, 1.0]]);
        assert!(chamfer3_grad(&a, &a)
            .unwrap()
            .iter()
            .flatten()
            .all(|&g| g == 0.0));
    }

    proptest! {
        #[test]
        fn symmetric_and_permutation_invariant(
            a in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..24),
            b in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..24),
            rot in 0usize..24,
        ) {
            let (ca, cb) = (c3(a.clone()), c3(b.clone()));
            let ab = chamfer3(&ca, &cb).unwrap();
            prop_assert!((ab - chamfer3(&cb, &ca).unwrap()).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
            let mut pa = a.clone();
            pa.rotate_left(rot % a.len());
            pa.reverse();
            let pab = chamfer3(&c3(pa), &cb).unwrap();
            prop_assert!((pab - ab).abs() < 1e-12);
        }
    }
}
