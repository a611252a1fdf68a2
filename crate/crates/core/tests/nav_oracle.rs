use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwalk::field::AlignedScene;
use splatwalk::nav::{
    astar, build_walkmap, egocentric_map, line_of_sight, simplify_path, supercover, GridCell, OctileCost, PlanOutcome,
    WalkMap,
};
use nalgebra::Rotation3;

fn random_map(rng: &mut ChaCha8Rng, n: usize, density: f64) -> WalkMap {
    let cells = (0..n * n).map(|_| (!rng.gen_bool(density)) as u8).collect();
    WalkMap::from_cells(n, n, cells, Vector2::zeros(), 1.0).unwrap()
}

/// Plain Dijkstra over the same 8-connected, no-corner-cutting graph.
fn dijkstra(map: &WalkMap, s: GridCell, g: GridCell) -> Option<OctileCost> {
    let (rows, cols) = (map.rows() as i64, map.cols() as i64);
    let ok = |r: i64, c: i64| r >= 0 && c >= 0 && r < rows && c < cols && map.is_walkable(GridCell::new(r as usize, c as usize));
    if !ok(s.row as i64, s.col as i64) || !ok(g.row as i64, g.col as i64) {
        return None;
    }
    let mut best = vec![None::<OctileCost>; (rows * cols) as usize];
    let mut heap = BinaryHeap::new();
    best[s.row * cols as usize + s.col] = Some(OctileCost::ZERO);
    heap.push(Reverse((OctileCost::ZERO, s.row as i64, s.col as i64)));
    while let Some(Reverse((d, r, c))) = heap.pop() {
        if best[(r * cols + c) as usize].is_some_and(|b| b < d) {
            continue;
        }
        if (r as usize, c as usize) == (g.row, g.col) {
            return Some(d);
        }
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                if (dr, dc) == (0, 0) || !ok(r + dr, c + dc) {
                    continue;
                }
                let diag = dr != 0 && dc != 0;
                if diag && (!ok(r + dr, c) || !ok(r, c + dc)) {
                    continue;
                }
                let nd = d + if diag { OctileCost::DIAGONAL } else { OctileCost::STRAIGHT };
                let slot = &mut best[((r + dr) * cols + c + dc) as usize];
                if slot.is_none_or(|b| nd < b) {
                    *slot = Some(nd);
                    heap.push(Reverse((nd, r + dr, c + dc)));
                }
            }
        }
    }
    None
}

#[test]
fn astar_cost_equals_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut found = 0;
    for i in 0..200 {
        let map = random_map(&mut rng, 32, [0.1, 0.25, 0.4][i % 3]);
        let s = GridCell::new(rng.gen_range(0..32), rng.gen_range(0..32));
        let g = GridCell::new(rng.gen_range(0..32), rng.gen_range(0..32));
        if !map.is_walkable(s) || !map.is_walkable(g) {
            continue;
        }
        let want = dijkstra(&map, s, g);
        match astar(&map, s, g).unwrap() {
            PlanOutcome::Found(p) => {
                found += 1;
                assert_eq!(Some(p.exact_cost), want);
                assert!(p.cells.iter().all(|c| map.is_walkable(*c)));
                assert_eq!((p.cells[0], *p.cells.last().unwrap()), (s, g));
                for w in p.cells.windows(2) {
                    let (dr, dc) = (w[1].row as i64 - w[0].row as i64, w[1].col as i64 - w[0].col as i64);
                    assert!(dr.abs() <= 1 && dc.abs() <= 1 && (dr, dc) != (0, 0));
                }
                let simple = simplify_path(&p, &map);
                assert_eq!(simple.cost, p.cost);
                for w in simple.waypoints.windows(2) {
                    let a = map.world_to_cell(&w[0]).unwrap();
                    let b = map.world_to_cell(&w[1]).unwrap();
                    for (r, c) in supercover((a.row as i64, a.col as i64), (b.row as i64, b.col as i64)) {
                        assert!(map.is_walkable(GridCell::new(r as usize, c as usize)));
                    }
                    assert!(line_of_sight(&map, a, b));
                }
            }
            PlanOutcome::Unreachable { .. } => assert_eq!(want, None),
        }
    }
    assert!(found > 50, "{found}");
}

#[test]
fn walkmap_equals_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (cell, tau, band) = (0.1, 0.25, (0.15, 1.8));
    for _ in 0..50 {
        let mut pts: Vec<Vector3<f64>> = Vec::new();
        for i in 0..15 {
            for j in 0..15 {
                pts.push(Vector3::new(i as f64 * 0.2, j as f64 * 0.2, 0.0));
            }
        }
        for _ in 0..rng.gen_range(0..40) {
            pts.push(Vector3::new(rng.gen_range(0.0..2.8), rng.gen_range(0.0..2.8), rng.gen_range(0.0..2.2)));
        }
        let scene = AlignedScene::from_rotation(Rotation3::identity(), &pts);
        let map = build_walkmap(&scene, cell, tau, band).unwrap();
        let floor = scene.floor_height();
        let obstacles: Vec<&Vector3<f64>> =
            pts.iter().filter(|p| p.z >= floor + band.0 && p.z <= floor + band.1).collect();
        for r in 0..map.rows() {
            for c in 0..map.cols() {
                let q = map.cell_to_world(GridCell::new(r, c));
                let d = obstacles
                    .iter()
                    .map(|p| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(map.is_walkable(GridCell::new(r, c)), d > tau, "cell ({r},{c}) d={d}");
            }
        }
    }
}

#[test]
fn egocentric_quarter_turn_transposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let map = random_map(&mut rng, 40, 0.3);
        let n = 15;
        let h = n / 2;
        let pos = map.cell_to_world(GridCell::new(20, 20));
        let e0 = egocentric_map(&map, &pos, 0.0, n).unwrap();
        let e90 = egocentric_map(&map, &pos, std::f64::consts::FRAC_PI_2, n).unwrap();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(e90[r * n + c], e0[c * n + (2 * h - r)]);
            }
        }
    }
}
