use super::{GridCell, Path, WalkMap};

/// Every cell touched by the segment joining the centers of `a` and `b`,
/// including both side cells when the segment passes exactly through a
/// cell corner. Coordinates are `(row, col)`.
pub fn supercover(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut y, mut x) = a;
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let ystep = dy.signum();
    let xstep = dx.signum();
    let (dy, dx) = (dy.abs(), dx.abs());
    let (ddy, ddx) = (2 * dy, 2 * dx);
    let mut out = vec![(y, x)];
    if ddx >= ddy {
        let mut error = dx;
        let mut errorprev = dx;
        for _ in 0..dx {
            x += xstep;
            error += ddy;
            if error > ddx {
                y += ystep;
                error -= ddx;
                match (error + errorprev).cmp(&ddx) {
                    std::cmp::Ordering::Less => out.push((y - ystep, x)),
                    std::cmp::Ordering::Greater => out.push((y, x - xstep)),
                    std::cmp::Ordering::Equal => {
                        out.push((y - ystep, x));
                        out.push((y, x - xstep));
                    }
                }
            }
            out.push((y, x));
            errorprev = error;
        }
    } else {
        let mut error = dy;
        let mut errorprev = dy;
        for _ in 0..dy {
            y += ystep;
            error += ddx;
            if error > ddy {
                x += xstep;
                error -= ddy;
                match (error + errorprev).cmp(&ddy) {
                    std::cmp::Ordering::Less => out.push((y, x - xstep)),
                    std::cmp::Ordering::Greater => out.push((y - ystep, x)),
                    std::cmp::Ordering::Equal => {
                        out.push((y, x - xstep));
                        out.push((y - ystep, x));
                    }
                }
            }
            out.push((y, x));
            errorprev = error;
        }
    }
    out
}

/// True when every cell of the supercover between `a` and `b` is walkable.
pub fn line_of_sight(map: &WalkMap, a: GridCell, b: GridCell) -> bool {
    supercover((a.row as i64, a.col as i64), (b.row as i64, b.col as i64))
        .into_iter()
        .all(|(r, c)| map.walkable_i(r, c))
}

/// Greedy shortcutting: from each kept cell, advance as far along the path
/// as line of sight allows. Cells and cost are kept; waypoints shrink.
pub fn simplify_path(path: &Path, map: &WalkMap) -> Path {
    let cells = &path.cells;
    if cells.len() <= 2 {
        return path.clone();
    }
    let mut kept = vec![0usize];
    let mut i = 0;
    while i < cells.len() - 1 {
        let mut j = i + 1;
        while j + 1 < cells.len() && line_of_sight(map, cells[i], cells[j + 1]) {
            j += 1;
        }
        kept.push(j);
        i = j;
    }
    Path {
        waypoints: kept.iter().map(|&k| map.cell_to_world(cells[k])).collect(),
        ..path.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nav::{astar, PlanOutcome};
    use nalgebra::Vector2;

    #[test]
    fn supercover_axis_and_diagonal() {
        assert_eq!(supercover((0, 0), (0, 3)), vec![(0, 0), (0, 1), (0, 2), (0, 3)]);
        let mut d = supercover((0, 0), (2, 2));
        d.sort();
        assert_eq!(d, vec![(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2)]);
        let mut s = supercover((0, 0), (1, 2));
        s.sort();
        assert_eq!(s, vec![(0, 0), (0, 1), (1, 1), (1, 2)]);
        assert_eq!(supercover((3, 3), (3, 3)), vec![(3, 3)]);
    }

    #[test]
    fn straight_corridor_has_two_waypoints() {
        let map = WalkMap::from_cells(1, 10, vec![1; 10], Vector2::zeros(), 1.0).unwrap();
        let out = astar(&map, GridCell::new(0, 0), GridCell::new(0, 9)).unwrap();
        let PlanOutcome::Found(p) = out else { panic!() };
        let s = simplify_path(&p, &map);
        assert_eq!(s.waypoints.len(), 2);
        assert_eq!(s.waypoints[0], map.cell_to_world(GridCell::new(0, 0)));
        assert_eq!(s.waypoints[1], map.cell_to_world(GridCell::new(0, 9)));
        assert_eq!(s.cells, p.cells);
    }

    #[test]
    fn single_cell_path_is_unchanged() {
        let map = WalkMap::from_cells(2, 2, vec![1; 4], Vector2::zeros(), 1.0).unwrap();
        let out = astar(&map, GridCell::new(1, 1), GridCell::new(1, 1)).unwrap();
        let p = out.path().unwrap();
        assert_eq!(&simplify_path(p, &map), p);
    }
}
