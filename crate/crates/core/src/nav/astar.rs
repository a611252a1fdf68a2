use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use nalgebra::Vector2;

use super::{GridCell, WalkMap};
use crate::error::{Error, Result};

/// Exact path length `straight + diagonal * sqrt(2)`.
///
/// Comparisons are done in integers so equal-length paths compare equal no
/// matter the order their moves were summed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OctileCost {
    pub straight: u64,
    pub diagonal: u64,
}

impl OctileCost {
    pub const ZERO: Self = Self { straight: 0, diagonal: 0 };
    pub const STRAIGHT: Self = Self { straight: 1, diagonal: 0 };
    pub const DIAGONAL: Self = Self { straight: 0, diagonal: 1 };

    /// Octile distance between two cells.
    pub fn octile(a: GridCell, b: GridCell) -> Self {
        let dr = a.row.abs_diff(b.row) as u64;
        let dc = a.col.abs_diff(b.col) as u64;
        let d = dr.min(dc);
        Self { straight: dr.max(dc) - d, diagonal: d }
    }

    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

impl std::ops::Add for OctileCost {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            straight: self.straight + o.straight,
            diagonal: self.diagonal + o.diagonal,
        }
    }
}

impl Ord for OctileCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of x - y*sqrt(2) with x = straight difference, y = diagonal difference
        let x = self.straight as i128 - other.straight as i128;
        let y = other.diagonal as i128 - self.diagonal as i128;
        match (x.signum(), y.signum()) {
            (0, 0) => Ordering::Equal,
            (sx, sy) if sx >= 0 && sy <= 0 => Ordering::Greater,
            (sx, sy) if sx <= 0 && sy >= 0 => Ordering::Less,
            (1, _) => (x * x).cmp(&(2 * y * y)),
            _ => (2 * y * y).cmp(&(x * x)),
        }
    }
}

impl PartialOrd for OctileCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<GridCell>,
    pub waypoints: Vec<Vector2<f64>>,
    pub cost: f64,
    pub exact_cost: OctileCost,
    /// Nodes popped and expanded by the search.
    pub expanded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Found(Path),
    Unreachable { expanded: usize },
}

impl PlanOutcome {
    pub fn path(&self) -> Option<&Path> {
        match self {
            PlanOutcome::Found(p) => Some(p),
            PlanOutcome::Unreachable { .. } => None,
        }
    }
}

const MOVES: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// 8-connected A* with the octile heuristic. Diagonal moves need both
/// orthogonal neighbors walkable. Open-list ties break on `(f, h, row-major index)`.
pub fn astar(map: &WalkMap, start: GridCell, goal: GridCell) -> Result<PlanOutcome> {
    for (what, c) in [("start", start), ("goal", goal)] {
        if !map.is_walkable(c) {
            return Err(Error::arg(format!("{what} cell ({}, {}) is blocked or out of bounds", c.row, c.col)));
        }
    }
    let cols = map.cols();
    let n = map.rows() * cols;
    let index = |c: GridCell| c.row * cols + c.col;
    let mut g: Vec<Option<OctileCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    g[index(start)] = Some(OctileCost::ZERO);
    let h0 = OctileCost::octile(start, goal);
    open.push(Reverse((h0, h0, index(start))));
    let mut expanded = 0;

    while let Some(Reverse((_, _, cur))) = open.pop() {
        if closed[cur] {
            continue;
        }
        closed[cur] = true;
        expanded += 1;
        if cur == index(goal) {
            break;
        }
        let (r, c) = ((cur / cols) as i64, (cur % cols) as i64);
        let gc = g[cur].expect("open nodes have a cost");
        for (dr, dc) in MOVES {
            let (nr, nc) = (r + dr, c + dc);
            if !map.walkable_i(nr, nc) {
                continue;
            }
            let diagonal = dr != 0 && dc != 0;
            if diagonal && !(map.walkable_i(r + dr, c) && map.walkable_i(r, c + dc)) {
                continue;
            }
            let next = nr as usize * cols + nc as usize;
            if closed[next] {
                continue;
            }
            let step = if diagonal { OctileCost::DIAGONAL } else { OctileCost::STRAIGHT };
            let ng = gc + step;
            if g[next].is_none_or(|old| ng < old) {
                g[next] = Some(ng);
                parent[next] = cur;
                let h = OctileCost::octile(GridCell::new(nr as usize, nc as usize), goal);
                open.push(Reverse((ng + h, h, next)));
            }
        }
    }

    let gi = index(goal);
    if !closed[gi] {
        return Ok(PlanOutcome::Unreachable { expanded });
    }
    let mut cells = vec![goal];
    let mut cur = gi;
    while cur != index(start) {
        cur = parent[cur];
        cells.push(GridCell::new(cur / cols, cur % cols));
    }
    cells.reverse();
    let exact_cost = g[gi].expect("goal reached");
    let waypoints = cells.iter().map(|&c| map.cell_to_world(c)).collect();
    Ok(PlanOutcome::Found(Path {
        cells,
        waypoints,
        cost: exact_cost.value(),
        exact_cost,
        expanded,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_map(rows: usize, cols: usize) -> WalkMap {
        WalkMap::from_cells(rows, cols, vec![1; rows * cols], Vector2::zeros(), 1.0).unwrap()
    }

    #[test]
    fn diagonal_run() {
        let map = open_map(5, 5);
        let p = astar(&map, GridCell::new(0, 0), GridCell::new(4, 4)).unwrap();
        let p = p.path().unwrap();
        assert_eq!(p.exact_cost, OctileCost { straight: 0, diagonal: 4 });
        assert!((p.cost - 4.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(p.cells.len(), 5);
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let mut cells = vec![1u8; 25];
        for c in [(2, 3), (2, 4), (3, 3), (4, 3)] {
            cells[c.0 * 5 + c.1] = 0;
        }
        let map = WalkMap::from_cells(5, 5, cells, Vector2::zeros(), 1.0).unwrap();
        let out = astar(&map, GridCell::new(0, 0), GridCell::new(4, 4)).unwrap();
        assert!(matches!(out, PlanOutcome::Unreachable { .. }));
    }

    #[test]
    fn blocked_endpoints_are_errors() {
        let mut cells = vec![1u8; 9];
        cells[0] = 0;
        let map = WalkMap::from_cells(3, 3, cells, Vector2::zeros(), 1.0).unwrap();
        assert!(astar(&map, GridCell::new(0, 0), GridCell::new(2, 2)).is_err());
        assert!(astar(&map, GridCell::new(2, 2), GridCell::new(9, 9)).is_err());
    }

    #[test]
    fn no_corner_cutting() {
        // blocked cells touch diagonally at the corner between (0,0) and (1,1)
        let cells = vec![1, 0, 0, 1];
        let map = WalkMap::from_cells(2, 2, cells, Vector2::zeros(), 1.0).unwrap();
        let out = astar(&map, GridCell::new(0, 0), GridCell::new(1, 1)).unwrap();
        assert!(matches!(out, PlanOutcome::Unreachable { .. }));
    }

    #[test]
    fn exact_cost_ordering() {
        let c = |s, d| OctileCost { straight: s, diagonal: d };
        assert!(c(3, 0) > c(0, 2)); // 3 > 2.83
        assert!(c(2, 0) < c(0, 2));
        assert!(c(1, 1) == c(1, 1));
        assert!(c(7, 0) < c(0, 5)); // 7 < 7.07
        assert!(c(0, 5) < c(8, 0));
        assert!(c(10, 3) > c(9, 3));
        assert!(c(1, 3) > c(5, 0)); // 5.24 > 5
    }

    #[test]
    fn start_equals_goal() {
        let map = open_map(3, 3);
        let out = astar(&map, GridCell::new(1, 1), GridCell::new(1, 1)).unwrap();
        let p = out.path().unwrap();
        assert_eq!(p.cells, vec![GridCell::new(1, 1)]);
        assert_eq!(p.cost, 0.0);
    }
}
