//! Deterministic synthetic scenes for demos and tests.

use nalgebra::Vector3;

use crate::error::Result;
use crate::gauss::{Gaussian3D, GaussianSet};
use crate::render::Camera;

const FLOOR_COLOR: [f64; 3] = [0.55, 0.52, 0.48];
const BOX_COLOR: [f64; 3] = [0.65, 0.30, 0.20];

fn splat(p: Vector3<f64>, sigma: f64, color: [f64; 3]) -> Gaussian3D {
    Gaussian3D::isotropic(p, sigma, 0.9, Vector3::from(color)).expect("valid synthetic gaussian")
}

/// Square lattice in the plane `z = height`, `half` meters either side of
/// `(cx, cy)`.
pub fn floor_plane(cx: f64, cy: f64, half: f64, spacing: f64, height: f64) -> Vec<Gaussian3D> {
    let n = (half / spacing).round() as i64;
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let p = Vector3::new(cx + i as f64 * spacing, cy + j as f64 * spacing, height);
            out.push(splat(p, spacing * 0.6, FLOOR_COLOR));
        }
    }
    out
}

/// Gaussians on the surface of an axis-aligned box.
pub fn box_surface(min: Vector3<f64>, max: Vector3<f64>, spacing: f64, color: [f64; 3]) -> Vec<Gaussian3D> {
    let steps = |a: f64, b: f64| ((b - a) / spacing).ceil().max(1.0) as usize;
    let (nx, ny, nz) = (steps(min.x, max.x), steps(min.y, max.y), steps(min.z, max.z));
    let at = |i: usize, n: usize, a: f64, b: f64| a + (b - a) * i as f64 / n as f64;
    let mut out = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                let on_face = i == 0 || i == nx || j == 0 || j == ny || k == 0 || k == nz;
                if on_face {
                    let p = Vector3::new(at(i, nx, min.x, max.x), at(j, ny, min.y, max.y), at(k, nz, min.z, max.z));
                    out.push(splat(p, spacing * 0.6, color));
                }
            }
        }
    }
    out
}

/// A handful of faint floaters that opacity culling should remove.
fn floaters() -> Vec<Gaussian3D> {
    (0..24)
        .map(|i| {
            let a = i as f64 * 2.399_963;
            let p = Vector3::new(2.0 * a.cos(), 2.0 * a.sin(), 1.0 + 0.05 * i as f64);
            Gaussian3D::isotropic(p, 0.05, 0.05, Vector3::new(0.9, 0.9, 0.9)).expect("valid floater")
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub gaussians: GaussianSet,
    pub box_min: Vector3<f64>,
    pub box_max: Vector3<f64>,
}

/// 6 m square floor at `z = 0` with one box standing on it, plus floaters.
pub fn floor_box_scene() -> SyntheticScene {
    let box_min = Vector3::new(0.9, 0.6, 0.0);
    let box_max = Vector3::new(1.7, 1.2, 0.8);
    let mut g = floor_plane(0.0, 0.0, 3.0, 0.05, 0.0);
    g.extend(box_surface(box_min, box_max, 0.05, BOX_COLOR));
    g.extend(floaters());
    SyntheticScene {
        gaussians: GaussianSet::new(g),
        box_min,
        box_max,
    }
}

/// `count` cameras on a circle around `target`, looking at it with `+z` up.
pub fn orbit_cameras(
    count: usize,
    target: Vector3<f64>,
    radius: f64,
    height: f64,
    focal: f64,
    resolution: [u32; 2],
) -> Result<Vec<Camera>> {
    (0..count)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / count.max(1) as f64 - std::f64::consts::FRAC_PI_2;
            let eye = target + Vector3::new(radius * a.cos(), radius * a.sin(), height);
            Camera::look_at(eye, target, Vector3::z(), focal, resolution)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_surface_has_no_interior() {
        let g = box_surface(Vector3::zeros(), Vector3::new(0.2, 0.2, 0.2), 0.1, BOX_COLOR);
        assert_eq!(g.len(), 27 - 1);
    }

    #[test]
    fn scene_is_deterministic() {
        let a = floor_box_scene();
        let b = floor_box_scene();
        assert_eq!(a.gaussians, b.gaussians);
    }
}
