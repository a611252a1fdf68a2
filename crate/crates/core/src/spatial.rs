//! Uniform grid over points in `D` dimensions with exact nearest-neighbor
//! and fixed-radius queries.
//!
//! Points are bucketed into cubic cells (CSR layout). Nearest queries walk
//! Chebyshev rings of cells outward from the query cell and stop once no
//! unvisited cell can hold a closer point, so results match a linear scan,
//! including the smallest-index tie rule.

/// Relative slack on the ring-termination bound. Covers cell assignment
/// rounding for points sitting on a cell boundary.
const RING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SpatialGrid<const D: usize> {
    points: Vec<[f64; D]>,
    min: [f64; D],
    cell: f64,
    dims: [usize; D],
    cell_start: Vec<u32>,
    entries: Vec<u32>,
}

#[inline]
pub(crate) fn dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

impl<const D: usize> SpatialGrid<D> {
    /// Builds a grid with roughly two points per occupied cell.
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let cell = auto_cell_size(&points);
        Self::with_cell_size(points, cell)
    }

    pub fn with_cell_size(points: Vec<[f64; D]>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        assert!(points.len() < u32::MAX as usize);
        let (min, max) = bounds(&points);
        let mut dims = [1usize; D];
        for i in 0..D {
            dims[i] = (((max[i] - min[i]) / cell).floor() as usize).saturating_add(1).max(1);
        }
        let ncells: usize = dims.iter().product();
        let mut grid = Self {
            points,
            min,
            cell,
            dims,
            cell_start: vec![0; ncells + 1],
            entries: Vec::new(),
        };
        let keys: Vec<usize> = grid.points.iter().map(|p| grid.flat(&grid.cell_of(p))).collect();
        for &k in &keys {
            grid.cell_start[k + 1] += 1;
        }
        for i in 0..ncells {
            grid.cell_start[i + 1] += grid.cell_start[i];
        }
        let mut fill = grid.cell_start.clone();
        grid.entries = vec![0; grid.points.len()];
        // ascending point index within each cell
        for (idx, &k) in keys.iter().enumerate() {
            grid.entries[fill[k] as usize] = idx as u32;
            fill[k] += 1;
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn raw_cell(&self, p: &[f64; D]) -> [i64; D] {
        let mut c = [0i64; D];
        for i in 0..D {
            let v = ((p[i] - self.min[i]) / self.cell).floor();
            c[i] = v.clamp(-(1i64 << 40) as f64, (1i64 << 40) as f64) as i64;
        }
        c
    }

    fn cell_of(&self, p: &[f64; D]) -> [usize; D] {
        let raw = self.raw_cell(p);
        let mut c = [0usize; D];
        for i in 0..D {
            c[i] = raw[i].clamp(0, self.dims[i] as i64 - 1) as usize;
        }
        c
    }

    fn flat(&self, c: &[usize; D]) -> usize {
        let mut k = 0;
        for i in (0..D).rev() {
            k = k * self.dims[i] + c[i];
        }
        k
    }

    fn cell_points(&self, c: &[usize; D]) -> &[u32] {
        let k = self.flat(c);
        &self.entries[self.cell_start[k] as usize..self.cell_start[k + 1] as usize]
    }

    /// Visits every in-bounds cell of the box `[lo, hi]` (inclusive, already clamped).
    fn visit_box(&self, lo: [i64; D], hi: [i64; D], mut f: impl FnMut(&[usize; D])) {
        if (0..D).any(|i| lo[i] > hi[i]) {
            return;
        }
        let mut cur = lo;
        loop {
            let mut c = [0usize; D];
            for i in 0..D {
                c[i] = cur[i] as usize;
            }
            f(&c);
            let mut axis = 0;
            loop {
                if axis == D {
                    return;
                }
                cur[axis] += 1;
                if cur[axis] <= hi[axis] {
                    break;
                }
                cur[axis] = lo[axis];
                axis += 1;
            }
        }
    }

    /// Exact nearest point: `(index, distance)`, ties to the smallest index.
    pub fn nearest(&self, q: &[f64; D]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let qc = self.raw_cell(q);
        let mut r_start = 0i64;
        let mut r_end = 0i64;
        for i in 0..D {
            let hi = self.dims[i] as i64 - 1;
            let outside = if qc[i] < 0 {
                -qc[i]
            } else if qc[i] > hi {
                qc[i] - hi
            } else {
                0
            };
            r_start = r_start.max(outside);
            r_end = r_end.max(qc[i].abs()).max((qc[i] - hi).abs());
        }
        let mut best: Option<(usize, f64)> = None;
        for r in r_start..=r_end {
            let mut lo = [0i64; D];
            let mut hi = [0i64; D];
            for i in 0..D {
                lo[i] = (qc[i] - r).max(0);
                hi[i] = (qc[i] + r).min(self.dims[i] as i64 - 1);
            }
            self.visit_box(lo, hi, |c| {
                let cheb = (0..D).map(|i| (c[i] as i64 - qc[i]).abs()).max().unwrap_or(0);
                if cheb != r {
                    return;
                }
                for &idx in self.cell_points(c) {
                    let idx = idx as usize;
                    let d = dist(q, &self.points[idx]);
                    let better = match best {
                        None => true,
                        Some((bi, bd)) => d < bd || (d == bd && idx < bi),
                    };
                    if better {
                        best = Some((idx, d));
                    }
                }
            });
            if let Some((_, bd)) = best {
                // cells at ring r + 1 and beyond are at least r * cell away
                let bound = r as f64 * self.cell;
                if bd < bound * (1.0 - RING_SLACK) - RING_SLACK {
                    break;
                }
            }
        }
        best
    }

    /// Calls `f(index, distance)` for every point within `radius` of `q`
    /// (inclusive), in a deterministic order.
    pub fn for_each_within(&self, q: &[f64; D], radius: f64, mut f: impl FnMut(usize, f64)) {
        if self.points.is_empty() || !(radius >= 0.0) {
            return;
        }
        let mut lo = [0i64; D];
        let mut hi = [0i64; D];
        for i in 0..D {
            let a = ((q[i] - radius - self.min[i]) / self.cell).floor() - 1.0;
            let b = ((q[i] + radius - self.min[i]) / self.cell).floor() + 1.0;
            let top = self.dims[i] as f64 - 1.0;
            lo[i] = a.clamp(0.0, top.max(0.0)) as i64;
            hi[i] = b.min(top) as i64;
            if b < 0.0 || a > top {
                return;
            }
        }
        self.visit_box(lo, hi, |c| {
            for &idx in self.cell_points(c) {
                let idx = idx as usize;
                let d = dist(q, &self.points[idx]);
                if d <= radius {
                    f(idx, d);
                }
            }
        });
    }
}

impl<const D: usize> SpatialGrid<D> {
    /// True when some point lies within `radius` of `q` (inclusive).
    pub fn any_within(&self, q: &[f64; D], radius: f64) -> bool {
        if self.points.is_empty() || !(radius >= 0.0) {
            return false;
        }
        let mut lo = [0i64; D];
        let mut hi = [0i64; D];
        for i in 0..D {
            let a = ((q[i] - radius - self.min[i]) / self.cell).floor() - 1.0;
            let b = ((q[i] + radius - self.min[i]) / self.cell).floor() + 1.0;
            let top = self.dims[i] as f64 - 1.0;
            if b < 0.0 || a > top {
                return false;
            }
            lo[i] = a.clamp(0.0, top.max(0.0)) as i64;
            hi[i] = b.min(top) as i64;
        }
        let mut found = false;
        self.visit_box(lo, hi, |c| {
            if !found {
                found = self.cell_points(c).iter().any(|&idx| dist(q, &self.points[idx as usize]) <= radius);
            }
        });
        found
    }
}

fn bounds<const D: usize>(points: &[[f64; D]]) -> ([f64; D], [f64; D]) {
    if points.is_empty() {
        return ([0.0; D], [0.0; D]);
    }
    let mut min = [f64::INFINITY; D];
    let mut max = [f64::NEG_INFINITY; D];
    for p in points {
        for i in 0..D {
            min[i] = min[i].min(p[i]);
            max[i] = max[i].max(p[i]);
        }
    }
    (min, max)
}

fn cell_count<const D: usize>(ext: &[f64; D], cell: f64) -> f64 {
    ext.iter().map(|e| (e / cell).floor() + 1.0).product()
}

fn auto_cell_size<const D: usize>(points: &[[f64; D]]) -> f64 {
    let (min, max) = bounds(points);
    let mut ext = [0.0; D];
    for i in 0..D {
        ext[i] = max[i] - min[i];
    }
    let largest = ext.iter().cloned().fold(0.0, f64::max);
    if largest <= 0.0 || points.len() < 4 {
        return largest.max(1.0);
    }
    let target = (points.len() as f64 / 2.0).max(1.0);
    // cell_count is non-increasing in the cell size; bisect in log space
    let mut lo = (largest / points.len() as f64).max(largest * 1e-9);
    let mut hi = largest * 2.0;
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if cell_count(&ext, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute<const D: usize>(pts: &[[f64; D]], q: &[f64; D]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d = dist(q, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn nearest_matches_linear_scan_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 2, 5, 40, 700] {
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..3.0), rng.gen_range(0.0..0.2)])
                .collect();
            let grid = SpatialGrid::new(pts.clone());
            for _ in 0..300 {
                let q = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..5.0), rng.gen_range(-1.0..1.0)];
                assert_eq!(grid.nearest(&q), Some(brute(&pts, &q)));
            }
        }
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let pts = vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let grid = SpatialGrid::with_cell_size(pts, 0.3);
        assert_eq!(grid.nearest(&[0.0, 0.0]).unwrap().0, 0);
        assert_eq!(grid.nearest(&[1.0, 0.0]), Some((0, 0.0)));
    }

    #[test]
    fn exhaustive_small_integer_lattice() {
        // many exact ties on a lattice
        let mut pts = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                pts.push([x as f64 * 0.5, y as f64 * 0.5]);
            }
        }
        for cell in [0.1, 0.5, 0.7, 3.0] {
            let grid = SpatialGrid::with_cell_size(pts.clone(), cell);
            for qx in -4..12 {
                for qy in -4..12 {
                    let q = [qx as f64 * 0.25, qy as f64 * 0.25];
                    assert_eq!(grid.nearest(&q), Some(brute(&pts, &q)), "cell {cell} q {q:?}");
                }
            }
        }
    }

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let grid = SpatialGrid::new(pts.clone());
        for _ in 0..100 {
            let q = [rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5)];
            let r = rng.gen_range(0.0..0.6);
            let mut got = Vec::new();
            grid.for_each_within(&q, r, |i, _| got.push(i));
            got.sort_unstable();
            let want: Vec<usize> = (0..pts.len()).filter(|&i| dist(&q, &pts[i]) <= r).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn empty_grid() {
        let grid: SpatialGrid<2> = SpatialGrid::new(Vec::new());
        assert!(grid.nearest(&[0.0, 0.0]).is_none());
    }
}
