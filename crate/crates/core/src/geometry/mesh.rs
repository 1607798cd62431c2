//! Triangle meshes and the OFF / ASCII OBJ readers.

use std::fmt::Write as _;
use std::path::Path;

use super::{parse_error, GeometryError, NormalizeTransform};

#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

/// How polygons with more than three vertices are handled by the readers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Triangulation {
    /// Split `v0 v1 ... vk` into `(v0, vi, vi+1)` triangles.
    #[default]
    Fan,
    /// Treat any non-triangle face as a parse error.
    Reject,
}

impl TriMesh {
    /// Validates indices, per-face distinctness and nonzero total area.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        if faces.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        for (i, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&v| v >= vertices.len()) {
                return Err(GeometryError::FaceIndex {
                    face: i,
                    index,
                    vertices: vertices.len(),
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::RepeatedIndex(i));
            }
        }
        if let Some(i) = vertices
            .iter()
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(GeometryError::NonFinite(i));
        }
        let mesh = Self { vertices, faces };
        if !(mesh.face_areas().iter().any(|&a| a > 0.0)) {
            return Err(GeometryError::ZeroArea);
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [[f64; 3]; 3] {
        self.faces[face].map(|v| self.vertices[v])
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len())
            .map(|f| triangle_area(&self.triangle(f)))
            .collect()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    pub fn transformed(&self, t: &NormalizeTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&p| t.apply(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Concatenates another mesh, offsetting its indices.
    pub(crate) fn append(&mut self, other: &TriMesh) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| f.map(|v| v + offset)));
    }

    pub(crate) fn from_parts_unchecked(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Self {
        Self { vertices, faces }
    }
}

pub(crate) fn triangle_area(t: &[[f64; 3]; 3]) -> f64 {
    let u = sub(t[1], t[0]);
    let v = sub(t[2], t[0]);
    let c = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Loads an OFF or ASCII OBJ mesh, chosen by file extension. Polygons are
/// fan-triangulated.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("off") => parse_off(&text, &name, Triangulation::Fan),
        Some("obj") => parse_obj(&text, &name, Triangulation::Fan),
        _ => Err(GeometryError::UnsupportedFormat(path.to_path_buf())),
    }
}

fn polygon_to_triangles(
    poly: &[usize],
    mode: Triangulation,
    name: &str,
    line: usize,
    out: &mut Vec<[usize; 3]>,
) -> Result<(), GeometryError> {
    if poly.len() < 3 {
        return Err(parse_error(name, line, "face has fewer than 3 vertices"));
    }
    if poly.len() > 3 && mode == Triangulation::Reject {
        return Err(parse_error(
            name,
            line,
            format!("non-triangular face with {} vertices", poly.len()),
        ));
    }
    for i in 1..poly.len() - 1 {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
    Ok(())
}

/// Re-attributes mesh validation failures to the source line of the face.
fn validate(
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    face_lines: &[usize],
    name: &str,
) -> Result<TriMesh, GeometryError> {
    TriMesh::new(vertices, faces).map_err(|e| match e {
        GeometryError::FaceIndex { face, .. } | GeometryError::RepeatedIndex(face) => {
            parse_error(name, face_lines[face], format!("face {face}: {e}"))
        }
        other => other,
    })
}

struct OffTokens<'a> {
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
    name: &'a str,
}

impl<'a> OffTokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), GeometryError> {
        let last_line = self.tokens.last().map_or(1, |t| t.0);
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| {
            parse_error(
                self.name,
                last_line,
                format!("unexpected end of file reading {what}"),
            )
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn usize(&mut self, what: &str) -> Result<(usize, usize), GeometryError> {
        let (l, t) = self.next(what)?;
        t.parse::<usize>()
            .map(|v| (l, v))
            .map_err(|_| parse_error(self.name, l, format!("invalid {what}: {t:?}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64, GeometryError> {
        let (l, t) = self.next(what)?;
        t.parse::<f64>()
            .map_err(|_| parse_error(self.name, l, format!("invalid {what}: {t:?}")))
    }
}

pub fn parse_off(text: &str, name: &str, mode: Triangulation) -> Result<TriMesh, GeometryError> {
    let mut tokens: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| {
            l.split('#')
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(move |t| (i + 1, t))
        })
        .collect();
    match tokens.first() {
        None => return Err(parse_error(name, 1, "empty file")),
        Some(&(_, "OFF")) => {
            tokens.remove(0);
        }
        Some(&(l, t)) => match t.strip_prefix("OFF") {
            Some(rest) if !rest.is_empty() => tokens[0] = (l, rest),
            _ => return Err(parse_error(name, l, "missing OFF header")),
        },
    }
    let mut tok = OffTokens {
        tokens,
        pos: 0,
        name,
    };
    let (_, nv) = tok.usize("vertex count")?;
    let (_, nf) = tok.usize("face count")?;
    tok.usize("edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push([
            tok.f64("coordinate")?,
            tok.f64("coordinate")?,
            tok.f64("coordinate")?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    let mut face_lines = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, k) = tok.usize("face size")?;
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            poly.push(tok.usize("face index")?.1);
        }
        let before = faces.len();
        polygon_to_triangles(&poly, mode, name, l, &mut faces)?;
        face_lines.extend(std::iter::repeat_n(l, faces.len() - before));
    }
    if faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    validate(vertices, faces, &face_lines, name)
}

pub fn parse_obj(text: &str, name: &str, mode: Triangulation) -> Result<TriMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut it = raw.split('#').next().unwrap_or("").split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let t = it
                        .next()
                        .ok_or_else(|| parse_error(name, line, "vertex needs 3 coordinates"))?;
                    *c = t.parse().map_err(|_| {
                        parse_error(name, line, format!("invalid coordinate {t:?}"))
                    })?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in it {
                    let idx = t.split('/').next().unwrap_or("");
                    let v: i64 = idx.parse().map_err(|_| {
                        parse_error(name, line, format!("invalid face index {t:?}"))
                    })?;
                    let resolved = match v {
                        0 => return Err(parse_error(name, line, "face index 0 is invalid in OBJ")),
                        v if v > 0 => (v - 1) as usize,
                        v => {
                            let back = (-v) as usize;
                            if back > vertices.len() {
                                return Err(parse_error(
                                    name,
                                    line,
                                    format!("relative index {v} out of range"),
                                ));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                let before = faces.len();
                polygon_to_triangles(&poly, mode, name, line, &mut faces)?;
                face_lines.extend(std::iter::repeat_n(line, faces.len() - before));
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    validate(vertices, faces, &face_lines, name)
}

pub fn save_off(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.vertices.len(), mesh.faces.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    std::fs::write(path, s)?;
    Ok(())
}
