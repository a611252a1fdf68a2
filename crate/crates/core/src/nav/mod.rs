//! Top-down walkability maps over the aligned scene frame, A* planning and
//! agent-centered occupancy sampling.

mod astar;
mod line;

pub use astar::{astar, OctileCost, Path, PlanOutcome};
pub use line::{line_of_sight, simplify_path, supercover};

use std::io::Write;
use std::path::Path as FsPath;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::AlignedScene;
use crate::spatial::SpatialGrid;

pub const DEFAULT_CELL: f64 = 0.05;
pub const DEFAULT_CLEARANCE: f64 = 0.25;
pub const DEFAULT_BAND: (f64, f64) = (0.15, 1.8);

/// Hard ceiling on map size; a mis-scaled scene should fail loudly.
const MAX_CELLS: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

impl GridCell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Binary occupancy grid; rows run along aligned `+y`, columns along `+x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkMap {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
    origin: Vector2<f64>,
    cell: f64,
    band: (f64, f64),
    no_obstacles: bool,
}

/// Sidecar written next to the PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkMapMeta {
    /// Aligned-frame position of the lower-left corner of cell (0, 0).
    pub origin: [f64; 2],
    pub cell: f64,
    /// Absolute aligned-frame height band of obstacle centers.
    pub band: [f64; 2],
    pub rows: usize,
    pub cols: usize,
    pub no_obstacles: bool,
}

impl WalkMap {
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<u8>, origin: Vector2<f64>, cell: f64) -> Result<Self> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(Error::arg(format!("{} cells do not form a {rows}x{cols} grid", cells.len())));
        }
        if !(cell > 0.0) {
            return Err(Error::arg("cell size must be positive"));
        }
        Ok(Self {
            rows,
            cols,
            cells: cells.into_iter().map(|c| (c != 0) as u8).collect(),
            origin,
            cell,
            band: (f64::NEG_INFINITY, f64::INFINITY),
            no_obstacles: false,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    /// Set when the obstacle band held no centers and the map is all walkable.
    pub fn no_obstacles(&self) -> bool {
        self.no_obstacles
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    pub fn is_walkable(&self, c: GridCell) -> bool {
        c.row < self.rows && c.col < self.cols && self.cells[c.row * self.cols + c.col] == 1
    }

    pub(crate) fn walkable_i(&self, row: i64, col: i64) -> bool {
        self.in_bounds(row, col) && self.cells[row as usize * self.cols + col as usize] == 1
    }

    pub fn cell_to_world(&self, c: GridCell) -> Vector2<f64> {
        self.origin + Vector2::new((c.col as f64 + 0.5) * self.cell, (c.row as f64 + 0.5) * self.cell)
    }

    pub fn world_to_cell(&self, p: &Vector2<f64>) -> Option<GridCell> {
        let (row, col) = self.world_to_index(p);
        self.in_bounds(row, col).then(|| GridCell::new(row as usize, col as usize))
    }

    fn world_to_index(&self, p: &Vector2<f64>) -> (i64, i64) {
        let q = (p - self.origin) / self.cell;
        let clamp = |v: f64| v.floor().clamp(-1e15, 1e15) as i64;
        (clamp(q.y), clamp(q.x))
    }

    /// Walkability of the cell containing `p`; outside the map is blocked.
    pub fn sample(&self, p: &Vector2<f64>) -> u8 {
        let (row, col) = self.world_to_index(p);
        self.walkable_i(row, col) as u8
    }

    /// Nearest walkable cell to `p` by Euclidean distance between cell
    /// centers, ties to the row-major smallest cell.
    pub fn nearest_walkable(&self, p: &Vector2<f64>) -> Option<GridCell> {
        let mut best: Option<(f64, GridCell)> = None;
        for row in 0..self.rows {
            for col in 0..self.cols {
                let c = GridCell::new(row, col);
                if !self.is_walkable(c) {
                    continue;
                }
                let d = (self.cell_to_world(c) - p).norm();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    pub fn meta(&self) -> WalkMapMeta {
        WalkMapMeta {
            origin: [self.origin.x, self.origin.y],
            cell: self.cell,
            band: [self.band.0, self.band.1],
            rows: self.rows,
            cols: self.cols,
            no_obstacles: self.no_obstacles,
        }
    }

    /// Binary PGM, 0 = blocked, 255 = walkable. The first image row is the
    /// highest map row so the image reads as a top-down view.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        for row in (0..self.rows).rev() {
            bytes.extend(self.cells[row * self.cols..(row + 1) * self.cols].iter().map(|&c| c * 255));
        }
        bytes
    }

    pub fn write_pgm(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn from_pgm(bytes: &[u8], meta: &WalkMapMeta) -> Result<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field `{s}`")));
        if fields[0] != "P5" || num(&fields[3])? != 255 {
            return Err(Error::Format("expected 8-bit binary PGM".into()));
        }
        let (cols, rows) = (num(&fields[1])?, num(&fields[2])?);
        if (rows, cols) != (meta.rows, meta.cols) {
            return Err(Error::Format("PGM size disagrees with its sidecar".into()));
        }
        let data = bytes
            .get(pos..pos + rows * cols)
            .ok_or_else(|| Error::Format("truncated PGM data".into()))?;
        let mut cells = vec![0u8; rows * cols];
        for (img_row, chunk) in data.chunks(cols).enumerate() {
            let row = rows - 1 - img_row;
            for (col, &v) in chunk.iter().enumerate() {
                cells[row * cols + col] = (v >= 128) as u8;
            }
        }
        let mut map = Self::from_cells(rows, cols, cells, Vector2::from(meta.origin), meta.cell)?;
        map.band = (meta.band[0], meta.band[1]);
        map.no_obstacles = meta.no_obstacles;
        Ok(map)
    }
}

/// Marks a cell walkable iff the horizontal distance from its center to the
/// nearest obstacle-band center exceeds `tau`.
///
/// `band` is relative to the scene floor. The map covers the horizontal
/// bounding box of every filtered center padded by `2 * tau`.
pub fn build_walkmap(scene: &AlignedScene, cell: f64, tau: f64, band: (f64, f64)) -> Result<WalkMap> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::arg(format!("cell size must be positive, got {cell}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::arg(format!("clearance must be non-negative, got {tau}")));
    }
    if !(band.0 <= band.1) {
        return Err(Error::arg(format!("empty height band {band:?}")));
    }
    if scene.is_empty() {
        return Err(Error::EmptyScene("no filtered centers".into()));
    }
    let floor = scene.floor_height();
    let (zlo, zhi) = (floor + band.0, floor + band.1);
    let obstacles: Vec<[f64; 2]> = scene
        .centers()
        .iter()
        .filter(|p| p[2] >= zlo && p[2] <= zhi)
        .map(|p| [p[0], p[1]])
        .collect();

    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in scene.centers() {
        lo = lo.inf(&Vector2::new(p[0], p[1]));
        hi = hi.sup(&Vector2::new(p[0], p[1]));
    }
    let pad = 2.0 * tau;
    let origin = lo - Vector2::repeat(pad);
    let extent = hi - lo + Vector2::repeat(2.0 * pad);
    let cols = ((extent.x / cell).ceil() as usize).max(1);
    let rows = ((extent.y / cell).ceil() as usize).max(1);
    if rows.saturating_mul(cols) > MAX_CELLS {
        return Err(Error::arg(format!("walk map of {rows}x{cols} cells is too large; increase the cell size")));
    }

    let no_obstacles = obstacles.is_empty();
    let grid = SpatialGrid::new(obstacles);
    let mut map = WalkMap {
        rows,
        cols,
        cells: Vec::new(),
        origin,
        cell,
        band: (zlo, zhi),
        no_obstacles,
    };
    map.cells = (0..rows)
        .into_par_iter()
        .flat_map_iter(|row| {
            let map = &map;
            let grid = &grid;
            (0..cols).map(move |col| {
                let u = map.cell_to_world(GridCell::new(row, col));
                match grid.nearest(&[u.x, u.y]) {
                    None => 1,
                    Some((_, d)) => (d > tau) as u8,
                }
            })
        })
        .collect();
    Ok(map)
}

/// Agent-centered `n x n` resample of `map`. Entry `(r, c)` looks at the
/// local offset `((c - h) * cell, (r - h) * cell)`, `h = (n - 1) / 2`,
/// rotated by `heading` (counter-clockwise from `+x`). Returned row-major.
pub fn egocentric_map(map: &WalkMap, pos: &Vector2<f64>, heading: f64, n: usize) -> Result<Vec<u8>> {
    if n % 2 == 0 {
        return Err(Error::arg(format!("egocentric map size must be odd, got {n}")));
    }
    let h = (n / 2) as f64;
    let (s, c) = heading.sin_cos();
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for col in 0..n {
            let lx = (col as f64 - h) * map.cell;
            let ly = (r as f64 - h) * map.cell;
            let p = pos + Vector2::new(c * lx - s * ly, s * lx + c * ly);
            out.push(map.sample(&p));
        }
    }
    Ok(out)
}

/// JSON export of a planned path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub waypoints: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 2]>,
    pub cost: f64,
}

impl From<&Path> for PathRecord {
    fn from(p: &Path) -> Self {
        Self {
            waypoints: p.waypoints.iter().map(|w| [w.x, w.y]).collect(),
            cells: p.cells.iter().map(|c| [c.row, c.col]).collect(),
            cost: p.cost,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    fn scene(points: &[[f64; 3]]) -> AlignedScene {
        let pts: Vec<_> = points.iter().map(|p| Vector3::from(*p)).collect();
        AlignedScene::from_rotation(Rotation3::identity(), &pts)
    }

    #[test]
    fn single_obstacle_blocks_its_ring() {
        // two floor points fix the floor at z = 0 and the map extent
        // dyadic values keep every cell-center distance exact
        let s = scene(&[[0.0, 0.0, 0.0], [2.0, 2.0, 0.0], [0.375, 0.375, 0.5]]);
        let map = build_walkmap(&s, 0.25, 0.25, (0.15, 1.8)).unwrap();
        let c = map.world_to_cell(&Vector2::new(0.375, 0.375)).unwrap();
        assert_eq!(map.cell_to_world(c), Vector2::new(0.375, 0.375));
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let r = (c.row as i64 + dr) as usize;
                let k = (c.col as i64 + dc) as usize;
                let blocked = !map.is_walkable(GridCell::new(r, k));
                // edge neighbors sit exactly at tau, which is not beyond it
                let expect = dr * dr + dc * dc <= 1;
                assert_eq!(blocked, expect, "offset {dr},{dc}");
            }
        }
        let far = map.world_to_cell(&Vector2::new(1.5, 1.5)).unwrap();
        assert!(map.is_walkable(far));
    }

    #[test]
    fn empty_band_is_all_walkable() {
        let s = scene(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.5, 0.5, 0.01]]);
        let map = build_walkmap(&s, 0.1, 0.2, (0.15, 1.8)).unwrap();
        assert!(map.no_obstacles());
        assert!(map.cells().iter().all(|&c| c == 1));
    }

    #[test]
    fn cell_round_trip() {
        let map = WalkMap::from_cells(7, 9, vec![1; 63], Vector2::new(-1.3, 2.7), 0.05).unwrap();
        for row in 0..7 {
            for col in 0..9 {
                let c = GridCell::new(row, col);
                assert_eq!(map.world_to_cell(&map.cell_to_world(c)), Some(c));
            }
        }
        assert_eq!(map.world_to_cell(&Vector2::new(-2.0, 0.0)), None);
    }

    #[test]
    fn pgm_round_trip() {
        let cells: Vec<u8> = (0..12).map(|i| (i % 3 != 0) as u8).collect();
        let map = WalkMap::from_cells(3, 4, cells, Vector2::new(0.5, -0.5), 0.1).unwrap();
        let bytes = map.to_pgm();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(WalkMap::from_pgm(&bytes, &map.meta()).unwrap().cells(), map.cells());
    }

    #[test]
    fn egocentric_basics() {
        let mut cells = vec![1u8; 25];
        cells[7] = 0;
        let map = WalkMap::from_cells(5, 5, cells, Vector2::zeros(), 1.0).unwrap();
        let center = map.cell_to_world(GridCell::new(2, 2));
        let ego = egocentric_map(&map, &center, 0.0, 3).unwrap();
        assert_eq!(ego[4], 1);
        // heading 0 at a cell center is a subgrid copy
        assert_eq!(ego, vec![1, 0, 1, 1, 1, 1, 1, 1, 1]);
        let away = egocentric_map(&map, &Vector2::new(100.0, 100.0), 0.3, 5).unwrap();
        assert!(away.iter().all(|&v| v == 0));
        assert!(egocentric_map(&map, &center, 0.0, 4).is_err());
    }
}
