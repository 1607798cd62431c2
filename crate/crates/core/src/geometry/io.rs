//! ASCII XYZ / XY / PLY point files. Coordinates are written with nine
//! significant digits; reading a written file and writing it again
//! reproduces the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use super::{parse_error, GeometryError, PointCloud3, PointSet2};

fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn save_xyz(cloud: &PointCloud3, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let mut s = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", fmt9(p[0]), fmt9(p[1]), fmt9(p[2]));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn parse_rows<const D: usize>(text: &str, name: &str) -> Result<Vec<[f64; D]>, GeometryError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut p = [0.0; D];
        let mut fields = line.split_whitespace();
        for c in &mut p {
            let t = fields
                .next()
                .ok_or_else(|| parse_error(name, i + 1, format!("expected {D} coordinates")))?;
            *c = t
                .parse()
                .map_err(|_| parse_error(name, i + 1, format!("invalid coordinate {t:?}")))?;
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud3, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    PointCloud3::new(parse_rows::<3>(&text, &path.display().to_string())?)
}

pub fn save_xy(points: &PointSet2, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let mut s = String::with_capacity(points.len() * 32);
    for p in points.points() {
        let _ = writeln!(s, "{} {}", fmt9(p[0]), fmt9(p[1]));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_xy(path: impl AsRef<Path>) -> Result<PointSet2, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    PointSet2::new(parse_rows::<2>(&text, &path.display().to_string())?)
}

pub fn save_ply(cloud: &PointCloud3, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let mut s = String::with_capacity(cloud.len() * 48 + 128);
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    );
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", fmt9(p[0]), fmt9(p[1]), fmt9(p[2]));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads the `vertex` element of an ASCII PLY file. Extra vertex properties
/// and any elements after the vertices are ignored.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud3, GeometryError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_error(&name, 1, "missing ply magic")),
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut seen_vertex = false;
    for (i, line) in lines.by_ref() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["format", fmt, _] if *fmt != "ascii" => {
                return Err(parse_error(
                    &name,
                    i + 1,
                    format!("unsupported PLY format {fmt}"),
                ))
            }
            ["element", "vertex", n] => {
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| parse_error(&name, i + 1, "invalid vertex count"))?,
                );
                in_vertex = true;
                seen_vertex = true;
            }
            ["element", ..] => {
                if seen_vertex && in_vertex {
                    in_vertex = false;
                } else if !seen_vertex {
                    return Err(parse_error(&name, i + 1, "vertex element must come first"));
                }
            }
            ["property", _, p] if in_vertex => props.push(p.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| parse_error(&name, 1, "no vertex element"))?;
    let idx = |axis: &str| {
        props
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| parse_error(&name, 1, format!("missing property {axis}")))
    };
    let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines.take(count) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < props.len() {
            return Err(parse_error(&name, i + 1, "short vertex row"));
        }
        let get = |k: usize| {
            f[k].parse::<f64>()
                .map_err(|_| parse_error(&name, i + 1, format!("invalid coordinate {:?}", f[k])))
        };
        points.push([get(ix)?, get(iy)?, get(iz)?]);
    }
    if points.len() != count {
        return Err(parse_error(
            &name,
            text.lines().count(),
            "fewer vertex rows than declared",
        ));
    }
    PointCloud3::new(points)
}

/// Loads `.ply` or `.xyz` by extension.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud3, GeometryError> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => load_ply(path),
        Some("xyz") => load_xyz(path),
        _ => Err(GeometryError::UnsupportedFormat(path.to_path_buf())),
    }
}
