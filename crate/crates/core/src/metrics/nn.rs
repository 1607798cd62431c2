use std::collections::HashMap;

/// Nearest-neighbor strategy used by the Chamfer functions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NeighborSearch {
    /// Exhaustive scan up to 4096 points per set, grid buckets above.
    #[default]
    Auto,
    Exhaustive,
    Grid,
}

const EXHAUSTIVE_LIMIT: usize = 4096;

#[inline]
pub(crate) fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

/// For every query, the index of and squared distance to its nearest target.
/// Ties resolve to the lowest target index under the exhaustive scan.
pub fn nearest_neighbors<const D: usize>(
    queries: &[[f64; D]],
    targets: &[[f64; D]],
    search: NeighborSearch,
) -> Vec<(usize, f64)> {
    let use_grid = match search {
        NeighborSearch::Exhaustive => false,
        NeighborSearch::Grid => true,
        NeighborSearch::Auto => queries.len().max(targets.len()) > EXHAUSTIVE_LIMIT,
    };
    if use_grid {
        let grid = Grid::build(targets);
        queries.iter().map(|q| grid.nearest(q, targets)).collect()
    } else {
        queries.iter().map(|q| scan(q, targets)).collect()
    }
}

fn scan<const D: usize>(q: &[f64; D], targets: &[[f64; D]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, t) in targets.iter().enumerate() {
        let d = dist2(q, t);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Uniform bucket grid over the targets' bounding box; queries search
/// Chebyshev shells of cells outward until no closer point can exist.
struct Grid<const D: usize> {
    origin: [f64; D],
    cell: f64,
    hi: [i64; D],
    cells: HashMap<[i64; D], Vec<usize>>,
}

impl<const D: usize> Grid<D> {
    fn build(targets: &[[f64; D]]) -> Self {
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for t in targets {
            for k in 0..D {
                lo[k] = lo[k].min(t[k]);
                hi[k] = hi[k].max(t[k]);
            }
        }
        let extent = (0..D).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let volume: f64 = (0..D).map(|k| (hi[k] - lo[k]).max(extent * 1e-3)).product();
        let per_cell = 2.0;
        let mut cell = (volume * per_cell / targets.len().max(1) as f64).powf(1.0 / D as f64);
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        let mut cells: HashMap<[i64; D], Vec<usize>> = HashMap::new();
        let mut max_idx = [0i64; D];
        for (j, t) in targets.iter().enumerate() {
            let c = Self::index_of(&lo, cell, t);
            for k in 0..D {
                max_idx[k] = max_idx[k].max(c[k]);
            }
            cells.entry(c).or_default().push(j);
        }
        Self {
            origin: lo,
            cell,
            hi: max_idx,
            cells,
        }
    }

    fn index_of(origin: &[f64; D], cell: f64, p: &[f64; D]) -> [i64; D] {
        let mut c = [0i64; D];
        for k in 0..D {
            c[k] = ((p[k] - origin[k]) / cell).floor() as i64;
        }
        c
    }

    fn nearest(&self, q: &[f64; D], targets: &[[f64; D]]) -> (usize, f64) {
        let qc = Self::index_of(&self.origin, self.cell, q);
        let max_shell = (0..D)
            .map(|k| qc[k].abs().max((qc[k] - self.hi[k]).abs()))
            .max()
            .unwrap_or(0);
        let mut best = (usize::MAX, f64::INFINITY);
        let mut offset = [0i64; D];
        for s in 0..=max_shell {
            // Enumerate the cube [-s, s]^D and keep cells on its surface.
            let side = 2 * s + 1;
            let total = (side as u128).pow(D as u32);
            for flat in 0..total {
                let mut rem = flat;
                let mut on_surface = false;
                for o in offset.iter_mut() {
                    *o = (rem % side as u128) as i64 - s;
                    rem /= side as u128;
                    on_surface |= o.abs() == s;
                }
                if !on_surface {
                    continue;
                }
                let mut key = qc;
                let mut inside = true;
                for k in 0..D {
                    key[k] += offset[k];
                    inside &= key[k] >= 0 && key[k] <= self.hi[k];
                }
                if !inside {
                    continue;
                }
                if let Some(list) = self.cells.get(&key) {
                    for &j in list {
                        let d = dist2(q, &targets[j]);
                        if d < best.1 || (d == best.1 && j < best.0) {
                            best = (j, d);
                        }
                    }
                }
            }
            let reach = s as f64 * self.cell;
            if best.1 <= reach * reach {
                break;
            }
        }
        best
    }
}
