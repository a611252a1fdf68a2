//! CPU tile rasterizer for Gaussian splats.
//!
//! Each Gaussian is projected with the affine (Jacobian) approximation of the
//! pinhole map, binned into 16x16 tiles, depth sorted per tile with a
//! `(depth, index)` tie-break and alpha composited front to back.

mod camera;
mod image;

pub use camera::{load_cameras, save_cameras, Camera, CameraRecord};
pub use image::{encode_srgb, Image};

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{Gaussian3D, GaussianSet};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Isotropic variance (pixels^2) added to every screen covariance.
    pub dilation: f64,
    /// Contributions whose exponent falls below `-cutoff` are dropped.
    pub cutoff: f64,
    pub max_alpha: f64,
    /// Compositing stops once transmittance drops below this. Zero disables.
    pub min_transmittance: f64,
    pub near: f64,
    /// Centers projecting further than this fraction of the viewport outside it are culled.
    pub cull_margin: f64,
    pub background: [f64; 3],
    pub tile_size: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            dilation: 0.3,
            cutoff: 12.0,
            max_alpha: 0.999,
            min_transmittance: 1e-4,
            near: 0.01,
            cull_margin: 0.3,
            background: [0.0; 3],
            tile_size: 16,
        }
    }
}

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Position in the source set; used for deterministic ordering.
    pub index: usize,
    pub center: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub color: Vector3<f64>,
}

impl Splat2D {
    /// Returns `None` when `cov` is not invertible.
    pub fn new(
        index: usize,
        center: Vector2<f64>,
        cov: Matrix2<f64>,
        depth: f64,
        opacity: f64,
        color: Vector3<f64>,
    ) -> Option<Self> {
        let cov = (cov + cov.transpose()) * 0.5;
        let det = cov.determinant();
        if !(det > 0.0 && det.is_finite()) {
            return None;
        }
        let conic = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
        Some(Self {
            index,
            center,
            cov,
            conic,
            depth,
            opacity,
            color,
        })
    }

    /// Half extents (pixels) of the region where the exponent stays above `-cutoff`.
    fn extent(&self, cutoff: f64) -> (f64, f64) {
        let k = 2.0 * cutoff;
        ((k * self.cov[(0, 0)]).sqrt(), (k * self.cov[(1, 1)]).sqrt())
    }
}

/// 2x3 Jacobian of the pinhole map at camera-space point `p`.
pub fn projection_jacobian(cam: &Camera, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * p.x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * p.y * iz2,
    )
}

/// Pinhole projection of a camera-space point to pixel coordinates.
pub fn project_point(cam: &Camera, p: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy)
}

pub fn project_gaussian(g: &Gaussian3D, index: usize, cam: &Camera, cfg: &RenderConfig) -> Option<Splat2D> {
    let p = cam.to_camera(&g.center());
    if !(p.z > cfg.near) {
        return None;
    }
    let center = project_point(cam, &p);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let (mx, my) = (cfg.cull_margin * w, cfg.cull_margin * h);
    if center.x < -mx || center.x > w + mx || center.y < -my || center.y > h + my {
        return None;
    }
    let j = projection_jacobian(cam, &p);
    let r = cam.rotation().matrix();
    let cov_cam = r * g.covariance() * r.transpose();
    let cov = j * cov_cam * j.transpose() + Matrix2::identity() * cfg.dilation;
    Splat2D::new(index, center, cov, p.z, g.opacity(), g.color())
}

/// `alpha * exp(-0.5 d^T conic d)` clamped below `max_alpha`; zero past the cutoff.
pub fn effective_opacity(s: &Splat2D, u: &Vector2<f64>, cfg: &RenderConfig) -> f64 {
    let d = u - s.center;
    let power = -0.5 * (d.x * (s.conic[(0, 0)] * d.x + s.conic[(0, 1)] * d.y)
        + d.y * (s.conic[(1, 0)] * d.x + s.conic[(1, 1)] * d.y));
    if power < -cfg.cutoff {
        return 0.0;
    }
    (s.opacity * power.min(0.0).exp()).min(cfg.max_alpha)
}

/// Front-to-back compositing of `splats` (already depth ordered) at pixel
/// sample `u`. Returns `(rgb, transmittance)` before background.
pub fn composite_pixel<'a>(
    splats: impl IntoIterator<Item = &'a Splat2D>,
    u: &Vector2<f64>,
    cfg: &RenderConfig,
) -> ([f64; 3], f64) {
    let mut rgb = [0.0; 3];
    let mut t = 1.0;
    for s in splats {
        let a = effective_opacity(s, u, cfg);
        if a <= 0.0 {
            continue;
        }
        let w = a * t;
        rgb[0] += w * s.color.x;
        rgb[1] += w * s.color.y;
        rgb[2] += w * s.color.z;
        t *= 1.0 - a;
        if t < cfg.min_transmittance {
            break;
        }
    }
    (rgb, t)
}

pub fn pixel_sample(x: u32, y: u32) -> Vector2<f64> {
    Vector2::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Projects every Gaussian, dropping culled ones, and sorts by `(depth, index)`.
pub fn project_sorted(scene: &GaussianSet, cam: &Camera, cfg: &RenderConfig) -> Vec<Splat2D> {
    let mut splats: Vec<Splat2D> = scene
        .as_slice()
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, i, cam, cfg))
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    splats
}

fn check_camera(cam: &Camera, cfg: &RenderConfig) -> Result<()> {
    if cam.width == 0 || cam.height == 0 {
        return Err(Error::arg(format!("zero camera resolution {}x{}", cam.width, cam.height)));
    }
    if cfg.tile_size == 0 {
        return Err(Error::arg("tile size must be positive"));
    }
    Ok(())
}

pub fn render(scene: &GaussianSet, cam: &Camera, cfg: &RenderConfig) -> Result<Image> {
    check_camera(cam, cfg)?;
    let splats = project_sorted(scene, cam, cfg);
    let ts = cfg.tile_size;
    let tiles_x = cam.width.div_ceil(ts);
    let tiles_y = cam.height.div_ceil(ts);
    let ntiles = (tiles_x * tiles_y) as usize;

    // splats arrive depth sorted, so per-tile lists inherit the order
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); ntiles];
    for (k, s) in splats.iter().enumerate() {
        let (ex, ey) = s.extent(cfg.cutoff);
        // pixel x samples at x + 0.5; one pixel of padding absorbs inverse round-off
        let x0 = (s.center.x - ex - 0.5).floor() - 1.0;
        let x1 = (s.center.x + ex - 0.5).ceil() + 1.0;
        let y0 = (s.center.y - ey - 0.5).floor() - 1.0;
        let y1 = (s.center.y + ey - 0.5).ceil() + 1.0;
        if x1 < 0.0 || y1 < 0.0 || x0 > (cam.width - 1) as f64 || y0 > (cam.height - 1) as f64 {
            continue;
        }
        let tx0 = (x0.max(0.0) as u32) / ts;
        let tx1 = (x1.min((cam.width - 1) as f64) as u32) / ts;
        let ty0 = (y0.max(0.0) as u32) / ts;
        let ty1 = (y1.min((cam.height - 1) as f64) as u32) / ts;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[(ty * tiles_x + tx) as usize].push(k as u32);
            }
        }
    }

    let bg = cfg.background;
    let tiles: Vec<(u32, u32, Vec<([f64; 3], f64)>)> = bins
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let tx = tile as u32 % tiles_x;
            let ty = tile as u32 / tiles_x;
            let xs = tx * ts..((tx + 1) * ts).min(cam.width);
            let ys = ty * ts..((ty + 1) * ts).min(cam.height);
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for y in ys {
                for x in xs.clone() {
                    let u = pixel_sample(x, y);
                    let (rgb, t) = composite_pixel(list.iter().map(|&k| &splats[k as usize]), &u, cfg);
                    let c = [rgb[0] + t * bg[0], rgb[1] + t * bg[1], rgb[2] + t * bg[2]];
                    out.push((c.map(|v| v.clamp(0.0, 1.0)), (1.0 - t).clamp(0.0, 1.0)));
                }
            }
            (tx, ty, out)
        })
        .collect();

    let mut img = Image::new(cam.width, cam.height);
    for (tx, ty, out) in tiles {
        let x0 = tx * ts;
        let w = ((tx + 1) * ts).min(cam.width) - x0;
        for (i, (rgb, a)) in out.into_iter().enumerate() {
            let i = i as u32;
            img.set(x0 + i % w, ty * ts + i / w, rgb, a);
        }
    }
    Ok(img)
}

/// Frame `t` renders `scene` together with `bodies[t]` from `cams[t]`.
pub fn render_sequence(
    scene: &GaussianSet,
    bodies: &[GaussianSet],
    cams: &[Camera],
    cfg: &RenderConfig,
) -> Result<Vec<Image>> {
    if bodies.len() != cams.len() {
        return Err(Error::arg(format!(
            "{} body frames but {} cameras",
            bodies.len(),
            cams.len()
        )));
    }
    bodies
        .iter()
        .zip(cams)
        .map(|(body, cam)| render(&scene.concat(body), cam, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Quaternion, Rotation3};

    fn axis_camera(f: f64, res: u32) -> Camera {
        Camera::new(
            [f, f],
            [res as f64 / 2.0, res as f64 / 2.0],
            [res, res],
            Rotation3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn unit_covariance_on_axis_projects_to_identity() {
        let cam = axis_camera(1.0, 4);
        let g = Gaussian3D::new(
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::repeat(1.0),
            Quaternion::identity(),
            0.5,
            Vector3::zeros(),
        )
        .unwrap();
        let cfg = RenderConfig { dilation: 0.0, ..Default::default() };
        let s = project_gaussian(&g, 0, &cam, &cfg).unwrap();
        assert!((s.cov - Matrix2::identity()).abs().max() < 1e-15);
        assert_eq!(s.center, Vector2::new(2.0, 2.0));
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = axis_camera(1.0, 4);
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, -1.0), 1.0, 0.5, Vector3::zeros()).unwrap();
        assert!(project_gaussian(&g, 0, &cam, &RenderConfig::default()).is_none());
    }

    #[test]
    fn effective_opacity_closed_forms() {
        let cfg = RenderConfig::default();
        let s = Splat2D::new(0, Vector2::new(1.0, 1.0), Matrix2::identity(), 1.0, 1.0, Vector3::zeros()).unwrap();
        assert_eq!(effective_opacity(&s, &Vector2::new(1.0, 1.0), &cfg), 0.999);
        let a = effective_opacity(&s, &Vector2::new(2.0, 2.0), &cfg);
        assert!((a - (-1.0f64).exp()).abs() < 1e-15);
        // exponent -12.5 is past the cutoff
        assert_eq!(effective_opacity(&s, &Vector2::new(6.0, 1.0), &cfg), 0.0);
        let s = Splat2D { opacity: 0.4, ..s };
        assert_eq!(effective_opacity(&s, &Vector2::new(1.0, 1.0), &cfg), 0.4);
    }

    #[test]
    fn zero_resolution_is_rejected() {
        let mut cam = axis_camera(1.0, 4);
        cam.width = 0;
        let scene = GaussianSet::new(vec![
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 1.0, 0.5, Vector3::zeros()).unwrap(),
        ]);
        assert!(matches!(render(&scene, &cam, &RenderConfig::default()), Err(Error::Argument(_))));
    }

    #[test]
    fn sequence_length_mismatch() {
        let cam = axis_camera(1.0, 4);
        let err = render_sequence(&GaussianSet::default(), &[GaussianSet::default()], &[cam.clone(), cam], &RenderConfig::default());
        assert!(matches!(err, Err(Error::Argument(_))));
    }
}
