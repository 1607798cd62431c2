use super::GeometryError;

/// An N×3 set of finite points, N ≥ 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud3 {
    points: Vec<[f64; 3]>,
}

impl PointCloud3 {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from a row-major `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(flat: &[f64]) -> Result<Self, GeometryError> {
        assert!(
            flat.len().is_multiple_of(3),
            "flat buffer length must be a multiple of 3"
        );
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn into_points(self) -> Vec<[f64; 3]> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn centroid(&self) -> [f64; 3] {
        centroid(&self.points)
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(norm).fold(0.0, f64::max)
    }
}

/// An M×2 set of finite points in the image plane. May be empty (an empty
/// rasterization, for instance); distance functions reject empty sets.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointSet2 {
    points: Vec<[f64; 2]>,
}

impl PointSet2 {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn into_points(self) -> Vec<[f64; 2]> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 2] {
        centroid(&self.points)
    }
}

pub(crate) fn centroid<const D: usize>(points: &[[f64; D]]) -> [f64; D] {
    let mut c = [0.0; D];
    for p in points {
        for k in 0..D {
            c[k] += p[k];
        }
    }
    let n = points.len().max(1) as f64;
    c.map(|v| v / n)
}

pub(crate) fn norm<const D: usize>(p: &[f64; D]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Affine map `x ↦ (x − center) / scale` applied by [`normalize_cloud`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizeTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.center[0]) / self.scale,
            (p[1] - self.center[1]) / self.scale,
            (p[2] - self.center[2]) / self.scale,
        ]
    }
}

/// Centers the cloud at the origin and scales it so the farthest point has
/// unit norm.
pub fn normalize_cloud(cloud: &PointCloud3) -> Result<PointCloud3, GeometryError> {
    normalize_cloud_with_transform(cloud).map(|(c, _)| c)
}

pub fn normalize_cloud_with_transform(
    cloud: &PointCloud3,
) -> Result<(PointCloud3, NormalizeTransform), GeometryError> {
    let first = cloud.points[0];
    if cloud.points.iter().all(|p| *p == first) {
        return Err(GeometryError::Degenerate);
    }
    let center = cloud.centroid();
    let scale = cloud
        .points
        .iter()
        .map(|p| norm(&[p[0] - center[0], p[1] - center[1], p[2] - center[2]]))
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(GeometryError::Degenerate);
    }
    let transform = NormalizeTransform { center, scale };
    let points = cloud.points.iter().map(|&p| transform.apply(p)).collect();
    Ok((PointCloud3 { points }, transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn two_point_cloud() {
        let c = PointCloud3::new(vec![[2.0, 0.0, 0.0], [4.0, 0.0, 0.0]]).unwrap();
        let n = normalize_cloud(&c).unwrap();
        assert_eq!(n.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn rejects_coincident_and_invalid() {
        let c = PointCloud3::new(vec![[0.1, 0.2, 0.3]; 3]).unwrap();
        assert!(matches!(
            normalize_cloud(&c),
            Err(GeometryError::Degenerate)
        ));
        assert!(matches!(
            PointCloud3::new(vec![]),
            Err(GeometryError::Empty)
        ));
        assert!(matches!(
            PointCloud3::new(vec![[0.0, f64::NAN, 0.0]]),
            Err(GeometryError::NonFinite(0))
        ));
    }

    #[test]
    fn random_cloud_normalizes() {
        let mut rng = crate::seed::rng(3);
        let pts: Vec<[f64; 3]> = (0..32)
            .map(|_| {
                [
                    rng.random_range(-5.0..7.0),
                    rng.random_range(-1.0..2.0),
                    rng.random_range(3.0..4.0),
                ]
            })
            .collect();
        let n = normalize_cloud(&PointCloud3::new(pts).unwrap()).unwrap();
        assert!(norm(&n.centroid()) < 1e-9);
        assert!((n.max_norm() - 1.0).abs() <= 1e-9);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(pts in prop::collection::vec(prop::array::uniform3(-100.0f64..100.0), 2..64)) {
            let c = PointCloud3::new(pts).unwrap();
            prop_assume!(normalize_cloud(&c).is_ok());
            let once = normalize_cloud(&c).unwrap();
            let twice = normalize_cloud(&once).unwrap();
            for (a, b) in once.points().iter().zip(twice.points()) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() <= 1e-12);
                }
            }
        }
    }
}
