//! Procedural furniture-like shapes built as unions of axis-aligned boxes.
//!
//! All families use a y-up frame with the front of the object facing +z.
//!
//! | family      | boxes | triangles | parameters |
//! |-------------|-------|-----------|------------|
//! | box-table   | 6 (top, 4 legs, shelf) | 72 | 7 |
//! | slat-chair  | 6 (seat, 4 legs, back) | 72 | 7 |
//! | sofa-block  | 4 (base, back, 2 arms) | 48 | 6 |

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    BoxTable,
    SlatChair,
    SofaBlock,
}

struct ParamDef {
    name: &'static str,
    lo: f64,
    hi: f64,
}

const fn p(name: &'static str, lo: f64, hi: f64) -> ParamDef {
    ParamDef { name, lo, hi }
}

const TABLE: &[ParamDef] = &[
    p("top_width", 1.0, 1.8),
    p("top_depth", 0.6, 1.2),
    p("top_thickness", 0.04, 0.12),
    p("leg_height", 0.6, 1.0),
    p("leg_thickness", 0.05, 0.14),
    p("shelf_height_frac", 0.15, 0.5),
    p("shelf_thickness", 0.03, 0.08),
];

const CHAIR: &[ParamDef] = &[
    p("seat_width", 0.8, 1.2),
    p("seat_depth", 0.7, 1.1),
    p("seat_thickness", 0.05, 0.15),
    p("leg_height", 0.6, 1.1),
    p("leg_thickness", 0.05, 0.15),
    p("back_height", 0.5, 1.2),
    p("back_thickness", 0.05, 0.15),
];

const SOFA: &[ParamDef] = &[
    p("width", 1.6, 2.6),
    p("depth", 0.8, 1.2),
    p("seat_height", 0.3, 0.6),
    p("back_height", 0.3, 0.8),
    p("back_thickness", 0.15, 0.35),
    p("arm_width", 0.1, 0.3),
];

impl ShapeFamily {
    fn defs(self) -> &'static [ParamDef] {
        match self {
            ShapeFamily::BoxTable => TABLE,
            ShapeFamily::SlatChair => CHAIR,
            ShapeFamily::SofaBlock => SOFA,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::BoxTable => "box-table",
            ShapeFamily::SlatChair => "slat-chair",
            ShapeFamily::SofaBlock => "sofa-block",
        }
    }

    pub fn param_names(self) -> Vec<&'static str> {
        self.defs().iter().map(|d| d.name).collect()
    }

    pub fn default_ranges(self) -> Vec<(f64, f64)> {
        self.defs().iter().map(|d| (d.lo, d.hi)).collect()
    }

    /// Number of boxes in every generated mesh.
    pub fn box_count(self) -> usize {
        match self {
            ShapeFamily::BoxTable | ShapeFamily::SlatChair => 6,
            ShapeFamily::SofaBlock => 4,
        }
    }

    /// Default GMM component count for latents of this family.
    pub fn default_components(self) -> usize {
        match self {
            ShapeFamily::SlatChair => 5,
            ShapeFamily::BoxTable | ShapeFamily::SofaBlock => 4,
        }
    }
}

/// A shape family with per-parameter sampling intervals and a seed for
/// [`ShapeFamilySpec::sample_params`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFamilySpec {
    pub family: ShapeFamily,
    /// Empty means the family's default ranges.
    #[serde(default)]
    pub ranges: Vec<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
}

impl ShapeFamilySpec {
    pub fn new(family: ShapeFamily, seed: u64) -> Self {
        Self {
            family,
            ranges: family.default_ranges(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let expected = self.family.defs().len();
        if self.ranges.len() != expected {
            return Err(GeometryError::ParamCount {
                family: self.family.name(),
                expected,
                got: self.ranges.len(),
            });
        }
        for (i, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() || lo <= 0.0 {
                return Err(GeometryError::EmptyInterval(i));
            }
        }
        Ok(())
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.ranges.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Uniform draw inside the ranges, reproducible from `(seed, index)`.
    pub fn sample_params(&self, index: u64) -> Vec<f64> {
        let mut rng = crate::seed::stream(self.seed, self.family.name(), index);
        self.ranges
            .iter()
            .map(|&(lo, hi)| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            })
            .collect()
    }
}

fn push_box(mesh: &mut TriMesh, min: [f64; 3], max: [f64; 3]) {
    let v = |i: usize| {
        [
            if i & 1 == 0 { min[0] } else { max[0] },
            if i & 2 == 0 { min[1] } else { max[1] },
            if i & 4 == 0 { min[2] } else { max[2] },
        ]
    };
    let vertices: Vec<[f64; 3]> = (0..8).map(v).collect();
    // Outward-facing triangles for the six sides.
    let faces = vec![
        [0, 4, 6],
        [0, 6, 2], // -x
        [1, 3, 7],
        [1, 7, 5], // +x
        [0, 1, 5],
        [0, 5, 4], // -y
        [2, 6, 7],
        [2, 7, 3], // +y
        [0, 2, 3],
        [0, 3, 1], // -z
        [4, 5, 7],
        [4, 7, 6], // +z
    ];
    mesh.append(&TriMesh::from_parts_unchecked(vertices, faces));
}

/// Builds the mesh of `shape.family` for the given parameters. The result
/// depends only on the family and the parameters, never on the seed.
pub fn generate_shape(shape: &ShapeFamilySpec, params: &[f64]) -> Result<TriMesh, GeometryError> {
    shape.validate()?;
    let defs = shape.family.defs();
    if params.len() != defs.len() {
        return Err(GeometryError::ParamCount {
            family: shape.family.name(),
            expected: defs.len(),
            got: params.len(),
        });
    }
    for (i, (&value, &(lo, hi))) in params.iter().zip(&shape.ranges).enumerate() {
        if !(lo..=hi).contains(&value) {
            return Err(GeometryError::ParamRange {
                index: i,
                name: defs[i].name,
                value,
                lo,
                hi,
            });
        }
    }
    let mut m = TriMesh::from_parts_unchecked(Vec::new(), Vec::new());
    match shape.family {
        ShapeFamily::SlatChair => {
            let [w, d, st, lh, lt, bh, bt] = params[..] else {
                unreachable!()
            };
            let (hw, hd) = (w / 2.0, d / 2.0);
            let lt = lt.min(hw).min(hd);
            let bt = bt.min(d / 2.0);
            legs(&mut m, hw, hd, lt, 0.0, lh);
            push_box(&mut m, [-hw, lh, -hd], [hw, lh + st, hd]);
            push_box(&mut m, [-hw, lh + st, -hd], [hw, lh + st + bh, -hd + bt]);
        }
        ShapeFamily::BoxTable => {
            let [w, d, tt, lh, lt, sf, sh] = params[..] else {
                unreachable!()
            };
            let (hw, hd) = (w / 2.0, d / 2.0);
            let lt = lt.min(hw).min(hd);
            legs(&mut m, hw, hd, lt, 0.0, lh);
            push_box(&mut m, [-hw, lh, -hd], [hw, lh + tt, hd]);
            let y = sf * lh;
            let sh = sh.min(lh - y);
            push_box(&mut m, [-hw + lt, y, -hd + lt], [hw - lt, y + sh, hd - lt]);
        }
        ShapeFamily::SofaBlock => {
            let [w, d, sh, bh, bt, aw] = params[..] else {
                unreachable!()
            };
            let (hw, hd) = (w / 2.0, d / 2.0);
            let aw = aw.min(hw / 3.0);
            let bt = bt.min(d / 2.0);
            push_box(&mut m, [-hw + aw, 0.0, -hd], [hw - aw, sh, hd]);
            push_box(&mut m, [-hw + aw, sh, -hd], [hw - aw, sh + bh, -hd + bt]);
            let arm_top = sh + 0.5 * bh;
            push_box(&mut m, [-hw, 0.0, -hd], [-hw + aw, arm_top, hd]);
            push_box(&mut m, [hw - aw, 0.0, -hd], [hw, arm_top, hd]);
        }
    }
    debug_assert_eq!(m.faces().len(), 12 * shape.family.box_count());
    let (v, f) = (m.vertices().to_vec(), m.faces().to_vec());
    TriMesh::new(v, f)
}

fn legs(m: &mut TriMesh, hw: f64, hd: f64, t: f64, y0: f64, y1: f64) {
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let x0 = if sx < 0.0 { -hw } else { hw - t };
        let z0 = if sz < 0.0 { -hd } else { hd - t };
        push_box(m, [x0, y0, z0], [x0 + t, y1, z0 + t]);
    }
}
