//! Scene geometry derived from raw Gaussians: opacity culling, up-axis
//! alignment and the soft nearest-neighbor distance to Gaussian centers.

use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::GaussianSet;
use crate::spatial::SpatialGrid;

pub const DEFAULT_BETA: f64 = 50.0;
pub const DEFAULT_OPACITY_CULL: f64 = 0.3;

/// Log-sum-exp terms more than this many nats below the largest one are
/// skipped, shifting `d_beta` by at most `ln(1 + N exp(-25)) / beta`.
const SOFTMIN_TRUNCATION: f64 = 25.0;

/// Percentile of aligned heights taken as the floor.
const FLOOR_PERCENTILE: f64 = 0.02;

pub fn cull_by_opacity(set: &GaussianSet, tau_alpha: f64) -> Result<GaussianSet> {
    if !(0.0..1.0).contains(&tau_alpha) {
        return Err(Error::arg(format!("opacity threshold must lie in [0,1), got {tau_alpha}")));
    }
    let kept: GaussianSet = set.iter().filter(|g| g.opacity() >= tau_alpha).cloned().collect();
    if kept.is_empty() {
        return Err(Error::EmptyScene(format!(
            "no Gaussian has opacity >= {tau_alpha} (of {})",
            set.len()
        )));
    }
    Ok(kept)
}

/// Rotation taking world coordinates to an aligned frame whose `+z` is the
/// smallest-variance principal direction of `centers`.
///
/// The sign of the up axis follows the mean of `camera_up` when given.
/// Otherwise the densest tenth of the height range is put at the bottom.
pub fn pca_align(centers: &[Vector3<f64>], camera_up: Option<&[Vector3<f64>]>) -> Result<Rotation3<f64>> {
    if centers.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 centers, got {}", centers.len())));
    }
    let n = centers.len() as f64;
    let mean = centers.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for c in centers {
        let d = c - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l0 > 0.0) || l1 <= 1e-12 * l0 {
        return Err(Error::Degenerate("centers are collinear or coincident".into()));
    }
    let major: Vector3<f64> = eig.eigenvectors.column(order[0]).normalize();
    let mut up: Vector3<f64> = eig.eigenvectors.column(order[2]).normalize();

    let flip = match camera_up {
        Some(ups) if !ups.is_empty() => ups.iter().sum::<Vector3<f64>>().dot(&up) < 0.0,
        _ => densest_band_is_high(centers, &up),
    };
    if flip {
        up = -up;
    }
    let side = up.cross(&major).normalize();
    let major = side.cross(&up).normalize();
    let m = Matrix3::from_rows(&[major.transpose(), side.transpose(), up.transpose()]);
    Ok(Rotation3::from_matrix_unchecked(m))
}

fn densest_band_is_high(centers: &[Vector3<f64>], up: &Vector3<f64>) -> bool {
    const BINS: usize = 10;
    let h: Vec<f64> = centers.iter().map(|c| c.dot(up)).collect();
    let lo = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return false;
    }
    let mut counts = [0usize; BINS];
    for v in &h {
        let b = (((v - lo) / (hi - lo)) * BINS as f64).floor() as usize;
        counts[b.min(BINS - 1)] += 1;
    }
    // first maximum wins, so ties favor the low side
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best >= BINS / 2
}

/// Tilts `rotation` so a plane fitted to the centers just above the floor
/// becomes level, repeating while the correction is noticeable.
///
/// Off-center mass such as furniture pulls the PCA up axis away from the
/// floor normal. Fits that are ill-conditioned or tilt more than
/// `MAX_LEVEL_TILT` are ignored.
pub fn level_floor(rotation: Rotation3<f64>, centers: &[Vector3<f64>]) -> Rotation3<f64> {
    let mut r = rotation;
    for _ in 0..LEVEL_ITERS {
        let aligned: Vec<Vector3<f64>> = centers.iter().map(|c| r * c).collect();
        let floor = percentile(aligned.iter().map(|p| p.z).collect(), FLOOR_PERCENTILE);
        let band: Vec<&Vector3<f64>> = aligned.iter().filter(|p| p.z <= floor + LEVEL_BAND).collect();
        let Some(normal) = fit_plane_normal(&band) else { break };
        let tilt = normal.z.clamp(-1.0, 1.0).acos();
        if tilt > MAX_LEVEL_TILT {
            break;
        }
        let Some(q) = Rotation3::rotation_between(&normal, &Vector3::z()) else { break };
        r = q * r;
        if tilt < 1e-9 {
            break;
        }
    }
    r
}

const LEVEL_ITERS: usize = 8;
const LEVEL_BAND: f64 = 0.05;
const MAX_LEVEL_TILT: f64 = 0.35;

/// Upward unit normal of the least-squares plane `z = a x + b y + c`.
fn fit_plane_normal(pts: &[&Vector3<f64>]) -> Option<Vector3<f64>> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + *p) / n;
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
        sxz += d.x * d.z;
        syz += d.y * d.z;
    }
    let det = sxx * syy - sxy * sxy;
    let trace = sxx + syy;
    if !(det > 1e-6 * trace * trace) {
        return None;
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    Some(Vector3::new(-a, -b, 1.0).normalize())
}

/// Opacity-filtered scene centers expressed in the aligned (z-up) frame.
#[derive(Debug, Clone)]
pub struct AlignedScene {
    rotation: Rotation3<f64>,
    floor_height: f64,
    grid: Arc<SpatialGrid<3>>,
}

/// Structured-text sidecar for caching an [`AlignedScene`]'s frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    /// Row-major world-to-aligned rotation.
    pub rotation: [[f64; 3]; 3],
    pub floor_height: f64,
    pub filtered_count: usize,
}

impl AlignedScene {
    /// Culls by opacity, aligns with PCA and estimates the floor.
    pub fn build(set: &GaussianSet, tau_alpha: f64, camera_up: Option<&[Vector3<f64>]>) -> Result<Self> {
        let kept = cull_by_opacity(set, tau_alpha)?;
        let centers = kept.centers();
        let rotation = level_floor(pca_align(&centers, camera_up)?, &centers);
        Ok(Self::from_rotation(rotation, &centers))
    }

    /// Uses a known world-to-aligned rotation instead of estimating one.
    pub fn from_rotation(rotation: Rotation3<f64>, world_centers: &[Vector3<f64>]) -> Self {
        let aligned: Vec<[f64; 3]> = world_centers.iter().map(|c| (rotation * c).into()).collect();
        let floor_height = percentile(aligned.iter().map(|p| p[2]).collect(), FLOOR_PERCENTILE);
        Self {
            rotation,
            floor_height,
            grid: Arc::new(SpatialGrid::new(aligned)),
        }
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn floor_height(&self) -> f64 {
        self.floor_height
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Filtered centers in the aligned frame.
    pub fn centers(&self) -> &[[f64; 3]] {
        self.grid.points()
    }

    pub fn center(&self, index: usize) -> Vector3<f64> {
        Vector3::from(self.grid.points()[index])
    }

    pub fn grid(&self) -> &Arc<SpatialGrid<3>> {
        &self.grid
    }

    pub fn record(&self) -> AlignmentRecord {
        let m = self.rotation.matrix();
        AlignmentRecord {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            floor_height: self.floor_height,
            filtered_count: self.len(),
        }
    }

    /// Soft distance field over every filtered center.
    pub fn distance_field(&self, beta: f64) -> Result<DistanceField> {
        DistanceField::from_grid(self.grid.clone(), beta)
    }
}

fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).floor() as usize]
}

/// Exact nearest filtered center, ties to the smaller index.
pub fn nearest_center(x: &Vector3<f64>, scene: &AlignedScene) -> (usize, f64) {
    scene
        .grid
        .nearest(&(*x).into())
        .expect("aligned scene always holds at least one center")
}

/// Softness and support of the soft nearest-neighbor distance.
#[derive(Debug, Clone)]
pub struct DistanceField {
    beta: f64,
    grid: Arc<SpatialGrid<3>>,
}

impl DistanceField {
    pub fn new(centers: &[Vector3<f64>], beta: f64) -> Result<Self> {
        let pts = centers.iter().map(|c| (*c).into()).collect();
        Self::from_grid(Arc::new(SpatialGrid::new(pts)), beta)
    }

    pub fn from_grid(grid: Arc<SpatialGrid<3>>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::arg(format!("softness beta must be positive, got {beta}")));
        }
        if grid.is_empty() {
            return Err(Error::EmptyScene("distance field needs at least one center".into()));
        }
        let cell = SOFTMIN_TRUNCATION / (4.0 * beta);
        let grid = if grid.cell_size() < cell {
            Arc::new(SpatialGrid::with_cell_size(grid.points().to_vec(), cell))
        } else {
            grid
        };
        Ok(Self { beta, grid })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::from_grid(self.grid.clone(), beta)
    }

    /// Exact nearest center: `(index, center)`, smaller index on ties.
    pub fn nearest(&self, x: &Vector3<f64>) -> (usize, Vector3<f64>) {
        let (i, _) = self.grid.nearest(&(*x).into()).expect("non-empty field");
        (i, Vector3::from(self.grid.points()[i]))
    }

    /// True when some center lies within `radius` of `x`.
    pub fn has_center_within(&self, x: &Vector3<f64>, radius: f64) -> bool {
        self.grid.any_within(&(*x).into(), radius)
    }

    /// `(d_beta(x), grad d_beta(x))` in one pass.
    pub fn eval(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let q: [f64; 3] = (*x).into();
        let (_, dmin) = self.grid.nearest(&q).expect("non-empty field");
        let beta = self.beta;
        let mut sum = 0.0;
        let mut grad = Vector3::zeros();
        self.grid.for_each_within(&q, dmin + SOFTMIN_TRUNCATION / beta, |j, d| {
            let w = (-beta * (d - dmin)).exp();
            sum += w;
            if d >= 1e-9 {
                let p = self.grid.points()[j];
                grad += (x - Vector3::from(p)) * (w / d);
            }
        });
        (dmin - sum.ln() / beta, grad / sum)
    }
}

/// `-(1/beta) ln sum_j exp(-beta |x - mu_j|)`, stabilized by subtracting the
/// nearest distance.
pub fn soft_distance(x: &Vector3<f64>, field: &DistanceField) -> f64 {
    field.eval(x).0
}

/// Softmin-weighted mean of unit directions from the centers to `x`.
/// Centers closer than `1e-9` contribute weight but no direction.
pub fn soft_distance_grad(x: &Vector3<f64>, field: &DistanceField) -> Vector3<f64> {
    field.eval(x).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::Gaussian3D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_with_opacities(ops: &[f64]) -> GaussianSet {
        ops.iter()
            .enumerate()
            .map(|(i, &o)| Gaussian3D::isotropic(Vector3::new(i as f64, 0.0, 0.0), 0.1, o, Vector3::zeros()).unwrap())
            .collect()
    }

    #[test]
    fn off_center_furniture_does_not_tilt_the_floor() {
        use crate::synthetic::{box_surface, floor_plane};
        let mut g = floor_plane(0.0, 0.0, 1.6, 0.05, 0.0);
        let floor = g.len();
        g.extend(box_surface(Vector3::new(0.3, 0.3, 0.0), Vector3::new(0.9, 0.8, 0.6), 0.05, [0.5; 3]));
        let tilt = Rotation3::from_euler_angles(0.2, -0.1, 0.7);
        let set = GaussianSet::new(g).rotated(&tilt);
        let pca = pca_align(&set.centers(), None).unwrap();
        let spread = |r: &Rotation3<f64>| {
            let z: Vec<f64> = set.centers()[..floor].iter().map(|c| (r * c).z).collect();
            z.iter().cloned().fold(f64::MIN, f64::max) - z.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(spread(&pca) > 0.05, "PCA alone should tilt here, spread {}", spread(&pca));
        let scene = AlignedScene::build(&set, 0.0, None).unwrap();
        assert!(spread(scene.rotation()) < 1e-3, "spread {}", spread(scene.rotation()));
        assert!((scene.floor_height() - (scene.rotation() * set.centers()[0]).z).abs() < 1e-3);
    }

    #[test]
    fn cull_keeps_order_and_threshold() {
        let set = set_with_opacities(&[0.2, 0.9, 0.5, 0.49]);
        assert_eq!(cull_by_opacity(&set, 0.0).unwrap(), set);
        let kept = cull_by_opacity(&set, 0.5).unwrap();
        let xs: Vec<f64> = kept.iter().map(|g| g.center().x).collect();
        assert_eq!(xs, vec![1.0, 2.0]);
        assert!(matches!(cull_by_opacity(&set, 0.95), Err(Error::EmptyScene(_))));
        assert!(cull_by_opacity(&set, 1.0).is_err());
    }

    #[test]
    fn cull_count_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ops: Vec<f64> = (0..rng.gen_range(1..60)).map(|_| rng.gen_range(0.01..0.99)).collect();
            let tau = rng.gen_range(0.0..0.5);
            let expect = ops.iter().filter(|&&o| o >= tau).count();
            match cull_by_opacity(&set_with_opacities(&ops), tau) {
                Ok(s) => assert_eq!(s.len(), expect),
                Err(_) => assert_eq!(expect, 0),
            }
        }
    }

    fn plane_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0), 0.0))
            .collect()
    }

    #[test]
    fn planar_scene_aligns_up_with_plane_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = plane_points(&mut rng, 400);
        let r = pca_align(&pts, None).unwrap();
        assert!(r.matrix().row(2).dot(&Vector3::z().transpose()).abs() > 0.999);
        let m = r.matrix();
        assert!((m * m.transpose() - Matrix3::identity()).abs().max() < 1e-9);
        assert!((m.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotated_plane_recovers_rotated_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let r0 = Rotation3::from_euler_angles(rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0));
            let pts: Vec<_> = plane_points(&mut rng, 300).iter().map(|p| r0 * p).collect();
            let r = pca_align(&pts, None).unwrap();
            let normal = r0 * Vector3::z();
            let up = r.matrix().row(2).transpose();
            assert!(up.dot(&normal).abs() > 1.0 - 1e-3);
        }
    }

    #[test]
    fn floor_down_sign_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // dense floor at z=0 plus a sparse box of clutter above it
        let mut pts = plane_points(&mut rng, 2000);
        for _ in 0..300 {
            pts.push(Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..1.5)));
        }
        let r = pca_align(&pts, None).unwrap();
        assert!(r.matrix().row(2)[2] > 0.99);
        let flipped: Vec<_> = pts.iter().map(|p| Vector3::new(p.x, -p.y, -p.z)).collect();
        let r = pca_align(&flipped, None).unwrap();
        assert!(r.matrix().row(2)[2] < -0.99);
        // a camera looking with its up towards -z overrides the density rule
        let r = pca_align(&pts, Some(&[Vector3::new(0.1, 0.0, -1.0)])).unwrap();
        assert!(r.matrix().row(2)[2] < -0.99);
    }

    #[test]
    fn collinear_is_degenerate_and_isotropic_is_fine() {
        let line: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(pca_align(&line, None), Err(Error::Degenerate(_))));
        assert!(pca_align(&line[..2], None).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cloud: Vec<_> = (0..500)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let m = *pca_align(&cloud, None).unwrap().matrix();
        assert!((m * m.transpose() - Matrix3::identity()).abs().max() < 1e-6);
    }

    #[test]
    fn soft_distance_closed_forms() {
        let one = DistanceField::new(&[Vector3::new(1.0, 2.0, 3.0)], 7.0).unwrap();
        let x = Vector3::new(2.0, 2.0, 3.0);
        assert!((soft_distance(&x, &one) - 1.0).abs() < 1e-15);
        assert!((soft_distance_grad(&x, &one) - Vector3::x()).norm() < 1e-15);

        let two = DistanceField::new(&[Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)], 1.0).unwrap();
        let d = soft_distance(&Vector3::zeros(), &two);
        assert!((d - (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!(soft_distance_grad(&Vector3::zeros(), &two).x.abs() < 1e-15);
    }

    #[test]
    fn coincident_center_contributes_no_direction() {
        let f = DistanceField::new(&[Vector3::zeros()], 10.0).unwrap();
        assert_eq!(soft_distance_grad(&Vector3::zeros(), &f), Vector3::zeros());
        assert_eq!(soft_distance(&Vector3::zeros(), &f), 0.0);
    }

    #[test]
    fn invalid_beta() {
        assert!(DistanceField::new(&[Vector3::zeros()], 0.0).is_err());
        assert!(DistanceField::new(&[], 1.0).is_err());
    }

    #[test]
    fn floor_is_low_percentile() {
        let mut pts: Vec<Vector3<f64>> = (0..98).map(|i| Vector3::new(i as f64, (i % 7) as f64, 1.0)).collect();
        pts.push(Vector3::new(0.0, 0.0, -5.0));
        pts.push(Vector3::new(0.0, 0.0, -4.0));
        let s = AlignedScene::from_rotation(Rotation3::identity(), &pts);
        assert_eq!(s.floor_height(), -4.0);
    }
}
