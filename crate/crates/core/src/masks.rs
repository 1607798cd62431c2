//! Binary silhouette masks: PGM input and output, sampling of foreground
//! pixels into 2D point sets, and rasterization of projected clouds.
//!
//! Rasterization covers the square `[−1.2, 1.2]²` of the camera plane. Row 0
//! is the top of the image (`y = +1.2`) and column 0 its left edge
//! (`x = −1.2`); [`RenderFrame`] maps pixel centers back to that plane.

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::geometry::PointSet2;

/// Half-width of the square rendered by [`rasterize`].
pub const RENDER_EXTENT: f64 = 1.2;

/// RMS radius of a uniform unit-ball cloud projected orthographically:
/// `E[x² + y²] = 2/5` for a point uniform in the unit ball. Normalized
/// silhouette samples are scaled to this radius.
pub fn calibration_rms() -> f64 {
    (2.0f64 / 5.0).sqrt()
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("mask has no foreground pixels")]
    EmptyForeground,
    #[error("mask dimensions must be positive")]
    EmptyImage,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyImage);
        }
        assert_eq!(
            bits.len(),
            width * height,
            "bit count must equal width × height"
        );
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, MaskError> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `(row, col)` of every foreground pixel in row-major order.
    pub fn foreground(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Intersection over union; two empty masks have IoU 1.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "masks differ in size"
        );
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Writes a binary (P5) PGM with foreground 255 and background 0.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), MaskError> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Writes an ASCII (P2) PGM.
    pub fn save_pgm_ascii(&self, path: impl AsRef<Path>) -> Result<(), MaskError> {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.bits.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "255" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Parses a P2 or P5 PGM; a pixel is foreground when its value exceeds half
/// of the maximum gray value.
pub fn parse_pgm(bytes: &[u8], path: &str) -> Result<BinaryMask, MaskError> {
    let err = |message: String| MaskError::Parse {
        path: path.to_string(),
        message,
    };
    let mut pos = 0;
    // header tokens, skipping whitespace and comments
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos).ok_or_else(|| err("empty file".into()))?;
    if magic != "P2" && magic != "P5" {
        return Err(err(format!(
            "unsupported magic {magic:?}, expected P2 or P5"
        )));
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(&mut pos).ok_or_else(|| err(format!("missing {name}")))?;
        *slot = tok
            .parse()
            .map_err(|_| err(format!("invalid {name} {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(MaskError::EmptyImage);
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    let values: Vec<usize> = if magic == "P2" {
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let tok = next_token(&mut pos)
                .ok_or_else(|| err(format!("expected {n} pixels, found {i}")))?;
            v.push(
                tok.parse()
                    .map_err(|_| err(format!("invalid pixel value {tok:?}")))?,
            );
        }
        v
    } else {
        // exactly one whitespace byte separates the header from the raster
        let data = &bytes[(pos + 1).min(bytes.len())..];
        let per = if maxval < 256 { 1 } else { 2 };
        if data.len() < n * per {
            return Err(err(format!(
                "expected {} raster bytes, found {}",
                n * per,
                data.len()
            )));
        }
        if per == 1 {
            data[..n].iter().map(|&b| b as usize).collect()
        } else {
            data[..2 * n]
                .chunks_exact(2)
                .map(|c| (c[0] as usize) << 8 | c[1] as usize)
                .collect()
        }
    };
    if let Some(v) = values.iter().find(|&&v| v > maxval) {
        return Err(err(format!("pixel value {v} exceeds maxval {maxval}")));
    }
    BinaryMask::new(
        width,
        height,
        values.iter().map(|&v| 2 * v > maxval).collect(),
    )
}

/// Loads a PGM mask, rejecting masks without foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, MaskError> {
    let path = path.as_ref();
    let mask = parse_pgm(&std::fs::read(path)?, &path.display().to_string())?;
    if mask.foreground_count() == 0 {
        return Err(MaskError::EmptyForeground);
    }
    Ok(mask)
}

fn draw_pixels(
    mask: &BinaryMask,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>, MaskError> {
    let fg = mask.foreground();
    if fg.is_empty() {
        return Err(MaskError::EmptyForeground);
    }
    Ok((0..m).map(|_| fg[rng.random_range(0..fg.len())]).collect())
}

/// Draws `m` foreground pixel centers uniformly with replacement, flips the
/// y axis to point up, moves the centroid to the origin and scales the set
/// to the RMS radius [`calibration_rms`]. A single-pixel mask yields `m`
/// copies of the origin.
pub fn sample_mask(mask: &BinaryMask, m: usize, seed: u64) -> Result<PointSet2, MaskError> {
    let picks = draw_pixels(mask, m, &mut crate::seed::rng(seed))?;
    let mut pts: Vec<[f64; 2]> = picks
        .iter()
        .map(|&(r, c)| [c as f64 + 0.5, -(r as f64 + 0.5)])
        .collect();
    let n = pts.len().max(1) as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in &mut pts {
        *p = [p[0] - cx, p[1] - cy];
    }
    let rms = (pts.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / n).sqrt();
    if rms > 0.0 {
        let s = calibration_rms() / rms;
        for p in &mut pts {
            *p = [p[0] * s, p[1] * s];
        }
    } else {
        pts.iter_mut().for_each(|p| *p = [0.0, 0.0]);
    }
    Ok(PointSet2::new(pts).expect("finite samples"))
}

/// Camera-plane placement of a mask produced by [`rasterize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderFrame {
    pub extent: f64,
}

impl Default for RenderFrame {
    fn default() -> Self {
        Self {
            extent: RENDER_EXTENT,
        }
    }
}

impl RenderFrame {
    /// Camera-plane coordinates of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize, width: usize, height: usize) -> [f64; 2] {
        let sx = 2.0 * self.extent / width as f64;
        let sy = 2.0 * self.extent / height as f64;
        [
            -self.extent + (col as f64 + 0.5) * sx,
            self.extent - (row as f64 + 0.5) * sy,
        ]
    }
}

/// Like [`sample_mask`], but maps pixel centers through a known render
/// frame instead of normalizing, so samples share the camera plane of the
/// projection that produced the mask.
pub fn sample_mask_in_frame(
    mask: &BinaryMask,
    m: usize,
    seed: u64,
    frame: RenderFrame,
) -> Result<PointSet2, MaskError> {
    let picks = draw_pixels(mask, m, &mut crate::seed::rng(seed))?;
    let pts = picks
        .iter()
        .map(|&(r, c)| frame.pixel_center(r, c, mask.width(), mask.height()))
        .collect();
    Ok(PointSet2::new(pts).expect("finite samples"))
}

/// Splats a disk of `radius` (camera-plane units) around every point onto a
/// `resolution × resolution` grid covering `[−1.2, 1.2]²`. A pixel is set
/// when its center lies within the disk.
pub fn rasterize(points: &PointSet2, resolution: usize, radius: f64) -> BinaryMask {
    let mut mask = BinaryMask::empty(resolution, resolution).expect("positive resolution");
    let frame = RenderFrame::default();
    let px = 2.0 * RENDER_EXTENT / resolution as f64;
    let r2 = radius * radius;
    let clamp = |v: f64| v.clamp(0.0, resolution as f64 - 1.0) as usize;
    for p in points.points() {
        let (col_c, row_c) = ((p[0] + RENDER_EXTENT) / px, (RENDER_EXTENT - p[1]) / px);
        let reach = radius / px + 1.0;
        if col_c + reach < 0.0
            || row_c + reach < 0.0
            || col_c - reach > resolution as f64
            || row_c - reach > resolution as f64
        {
            continue;
        }
        for row in clamp(row_c - reach)..=clamp(row_c + reach) {
            for col in clamp(col_c - reach)..=clamp(col_c + reach) {
                let c = frame.pixel_center(row, col, resolution, resolution);
                if (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) <= r2 {
                    mask.set(row, col, true);
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn p2_example_and_empty() {
        let m = parse_pgm(b"P2\n2 2\n255\n255 0\n0 255\n", "t").unwrap();
        assert_eq!(m.foreground_count(), 2);
        assert!(m.get(0, 0) && m.get(1, 1));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.pgm");
        std::fs::write(&p, "P2\n2 2\n255\n0 0 0 0\n").unwrap();
        assert!(matches!(load_mask(&p), Err(MaskError::EmptyForeground)));
    }

    #[test]
    fn p2_and_p5_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = BinaryMask::empty(7, 5).unwrap();
        for (r, c) in [(0, 0), (1, 3), (4, 6), (2, 2)] {
            m.set(r, c, true);
        }
        m.save_pgm(dir.path().join("a.pgm")).unwrap();
        m.save_pgm_ascii(dir.path().join("b.pgm")).unwrap();
        let a = load_mask(dir.path().join("a.pgm")).unwrap();
        let b = load_mask(dir.path().join("b.pgm")).unwrap();
        assert_eq!(a, m);
        assert_eq!(b, m);
    }

    #[test]
    fn threshold_and_comments() {
        let m = parse_pgm(b"P2 # c\n3 1\n# more\n255\n127 128 255\n", "t").unwrap();
        assert_eq!(m.bits(), &[false, true, true]);
        let wide = [b"P5\n2 1\n65535\n".as_slice(), &[0x80, 0x00, 0x7f, 0xff]].concat();
        assert_eq!(parse_pgm(&wide, "t").unwrap().bits(), &[true, false]);
        assert!(parse_pgm(b"P3\n1 1\n255\n0\n", "t").is_err());
        assert!(parse_pgm(b"P2\n2 2\n255\n0 0 0\n", "t").is_err());
    }

    #[test]
    fn single_pixel_samples_to_origin() {
        let mut m = BinaryMask::empty(9, 9).unwrap();
        m.set(3, 5, true);
        let s = sample_mask(&m, 17, 1).unwrap();
        assert_eq!(s.len(), 17);
        assert!(s.points().iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn samples_are_centered_scaled_and_deterministic() {
        let pts = PointSet2::new(vec![[0.3, 0.2], [-0.4, -0.1]]).unwrap();
        let m = rasterize(&pts, 64, 0.3);
        let s = sample_mask(&m, 500, 9).unwrap();
        let c = s.centroid();
        assert!(c[0].abs() < 1e-9 && c[1].abs() < 1e-9);
        let rms = (s
            .points()
            .iter()
            .map(|p| p[0] * p[0] + p[1] * p[1])
            .sum::<f64>()
            / 500.0)
            .sqrt();
        assert!((rms - calibration_rms()).abs() < 1e-12);
        assert_eq!(s, sample_mask(&m, 500, 9).unwrap());
        assert!(matches!(
            sample_mask(&BinaryMask::empty(4, 4).unwrap(), 3, 0),
            Err(MaskError::EmptyForeground)
        ));
    }

    #[test]
    fn translation_invariance() {
        let mut a = BinaryMask::empty(40, 40).unwrap();
        let mut b = BinaryMask::empty(40, 40).unwrap();
        for (r, c) in [(5, 5), (5, 6), (6, 5), (9, 12), (10, 12), (11, 13)] {
            a.set(r, c, true);
            b.set(r + 7, c + 11, true);
        }
        let (sa, sb) = (
            sample_mask(&a, 300, 4).unwrap(),
            sample_mask(&b, 300, 4).unwrap(),
        );
        // one pixel in normalized units
        let raw = sample_mask_in_frame(&a, 300, 4, RenderFrame { extent: 20.0 }).unwrap();
        let n = raw.len() as f64;
        let c = raw.centroid();
        let rms = (raw
            .points()
            .iter()
            .map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let pixel = calibration_rms() / rms;
        for (p, q) in sa.points().iter().zip(sb.points()) {
            assert!((p[0] - q[0]).hypot(p[1] - q[1]) < pixel);
        }
    }

    #[test]
    fn disk_area_count() {
        let origin = PointSet2::new(vec![[0.0, 0.0]]).unwrap();
        for (res, r) in [(128, 0.2), (128, 0.5), (256, 0.1)] {
            let expect = std::f64::consts::PI * (r * res as f64 / 2.4).powi(2);
            let got = rasterize(&origin, res, r).foreground_count() as f64;
            assert!((got - expect).abs() < 0.1 * expect, "{got} vs {expect}");
        }
        assert_eq!(
            rasterize(&PointSet2::new(vec![]).unwrap(), 32, 0.1).foreground_count(),
            0
        );
    }

    #[test]
    fn disk_samples_are_area_uniform() {
        let mask = rasterize(&PointSet2::new(vec![[0.0, 0.0]]).unwrap(), 512, 1.1);
        let n = 100_000;
        let s = sample_mask(&mask, n, 3).unwrap();
        // for a uniform disk the RMS radius is R/√2, so ρ = r/(√2·rms) is
        // uniform on the unit disk: P(ρ < a) = a²
        let radius = calibration_rms() * 2f64.sqrt();
        let bins = 20;
        let mut counts = vec![0.0; bins];
        for p in s.points() {
            let rho2 = (p[0] * p[0] + p[1] * p[1]) / (radius * radius);
            counts[((rho2 * bins as f64) as usize).min(bins - 1)] += 1.0;
        }
        let expected = n as f64 / bins as f64;
        let stat: f64 = counts
            .iter()
            .map(|c| (c - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
        assert!(p > 0.01, "chi-square {stat}, p = {p}");
    }

    #[test]
    fn rasterize_is_monotone_and_round_trips() {
        use crate::geometry::{
            generate_shape, normalize_cloud, sample_surface, ShapeFamily, ShapeFamilySpec,
        };
        let shape = ShapeFamilySpec::new(ShapeFamily::SlatChair, 0);
        let mesh = generate_shape(&shape, &shape.midpoint()).unwrap();
        let cloud = normalize_cloud(&sample_surface(&mesh, 20_000, 1).unwrap()).unwrap();
        let proj = crate::pose::project(&cloud, &crate::pose::Pose::from_degrees(30.0, 15.0, 0.0));
        let base = PointSet2::new(proj.points()[..2000].to_vec()).unwrap();
        let (a, b) = (rasterize(&base, 128, 0.012), rasterize(&proj, 128, 0.012));
        assert!(a.bits().iter().zip(b.bits()).all(|(&x, &y)| !x || y));

        let m = 4 * b.foreground_count();
        let resampled = sample_mask_in_frame(&b, m, 2, RenderFrame::default()).unwrap();
        let again = rasterize(&resampled, 128, 0.012);
        assert!(b.iou(&again) > 0.9, "IoU {}", b.iou(&again));
    }
}
