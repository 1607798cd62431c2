use rand::Rng;

use super::{GeometryError, PointCloud3, TriMesh};

/// Draws `n` points area-uniformly over the mesh surface: a face is picked
/// with probability proportional to its area, then a point uniformly inside
/// it via the square-root barycentric mapping.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud3, GeometryError> {
    sample_surface_with_faces(mesh, n, seed).map(|(c, _)| c)
}

/// Like [`sample_surface`], also returning the face index of every sample.
pub fn sample_surface_with_faces(
    mesh: &TriMesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud3, Vec<usize>), GeometryError> {
    if n == 0 {
        return Err(GeometryError::Empty);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for a in mesh.face_areas() {
        total += a;
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(GeometryError::ZeroArea);
    }
    let mut rng = crate::seed::rng(seed);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push([0, 1, 2].map(|k| wa * a[k] + wb * b[k] + wc * c[k]));
        faces.push(face);
    }
    Ok((PointCloud3::new(points)?, faces))
}
