//! Gaussian primitives and the splat PLY format.
//!
//! Quaternions are `(w, x, y, z)`, right-handed, rotating column vectors.
//! Every quantity is stored post-activation: opacities are in `(0, 1)`,
//! scales are positive standard deviations in meters.

mod ply;

pub use ply::{load_splat_ply, parse_splat_ply, save_splat_ply, write_splat_ply, SH_C0};

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Quaternions whose norm is already this close to one are kept verbatim,
/// which makes `save -> load -> save` byte-stable.
const QUAT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    center: Vector3<f64>,
    scale: Vector3<f64>,
    rotation: Quaternion<f64>,
    opacity: f64,
    color: Vector3<f64>,
}

impl Gaussian3D {
    /// Builds a Gaussian, normalizing the quaternion.
    ///
    /// Fails when a scale is not strictly positive, the opacity is outside
    /// `(0, 1)`, the quaternion is zero, or any value is non-finite.
    pub fn new(
        center: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: Quaternion<f64>,
        opacity: f64,
        color: Vector3<f64>,
    ) -> Result<Self> {
        let finite = center.iter().all(|v| v.is_finite())
            && scale.iter().all(|v| v.is_finite())
            && rotation.coords.iter().all(|v| v.is_finite())
            && opacity.is_finite()
            && color.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::arg("gaussian has non-finite component"));
        }
        if scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::arg(format!("scale must be positive, got {scale:?}")));
        }
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(Error::arg(format!("opacity must lie in (0,1), got {opacity}")));
        }
        let norm = rotation.norm();
        if norm < 1e-12 {
            return Err(Error::arg("zero quaternion"));
        }
        let rotation = if (norm - 1.0).abs() <= QUAT_NORM_TOLERANCE {
            rotation
        } else {
            rotation / norm
        };
        Ok(Self {
            center,
            scale,
            rotation,
            opacity,
            color,
        })
    }

    /// Isotropic, unrotated Gaussian. Convenient for synthetic scenes.
    pub fn isotropic(center: Vector3<f64>, sigma: f64, opacity: f64, color: Vector3<f64>) -> Result<Self> {
        Self::new(
            center,
            Vector3::repeat(sigma),
            Quaternion::identity(),
            opacity,
            color,
        )
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.scale
    }

    /// Stored quaternion; unit norm within `1e-6`.
    pub fn rotation(&self) -> Quaternion<f64> {
        self.rotation
    }

    pub fn unit_rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(self.rotation)
    }

    pub fn opacity(&self) -> f64 {
        self.opacity
    }

    pub fn color(&self) -> Vector3<f64> {
        self.color
    }

    /// `R diag(s^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance(self)
    }

    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        Self {
            center,
            ..self.clone()
        }
    }

    /// Same Gaussian moved to `center` with its orientation pre-multiplied by `rotation`.
    pub fn with_pose(&self, center: Vector3<f64>, rotation: &UnitQuaternion<f64>) -> Self {
        let q = rotation.quaternion() * self.rotation;
        let norm = q.norm();
        let q = if (norm - 1.0).abs() <= QUAT_NORM_TOLERANCE { q } else { q / norm };
        Self {
            center,
            rotation: q,
            ..self.clone()
        }
    }
}

pub fn covariance(g: &Gaussian3D) -> Matrix3<f64> {
    let r = g.unit_rotation().to_rotation_matrix().into_inner();
    let s2 = g.scale.component_mul(&g.scale);
    let rs = r * Matrix3::from_diagonal(&s2);
    let cov = rs * r.transpose();
    // exact symmetry
    (cov + cov.transpose()) * 0.5
}

/// Ordered collection of Gaussians. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianSet {
    gaussians: Vec<Gaussian3D>,
}

impl GaussianSet {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        Self { gaussians }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Gaussian3D> {
        self.gaussians.iter()
    }

    pub fn as_slice(&self) -> &[Gaussian3D] {
        &self.gaussians
    }

    pub fn get(&self, index: usize) -> Option<&Gaussian3D> {
        self.gaussians.get(index)
    }

    pub fn into_vec(self) -> Vec<Gaussian3D> {
        self.gaussians
    }

    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.gaussians.iter().map(|g| g.center).collect()
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &GaussianSet) -> GaussianSet {
        let mut gaussians = Vec::with_capacity(self.len() + other.len());
        gaussians.extend_from_slice(&self.gaussians);
        gaussians.extend_from_slice(&other.gaussians);
        GaussianSet { gaussians }
    }

    /// Applies a rigid rotation about the origin to centers and orientations.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> GaussianSet {
        let q = UnitQuaternion::from_rotation_matrix(rotation);
        self.gaussians
            .iter()
            .map(|g| g.with_pose(rotation * g.center, &q))
            .collect()
    }
}

impl FromIterator<Gaussian3D> for GaussianSet {
    fn from_iter<I: IntoIterator<Item = Gaussian3D>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a GaussianSet {
    type Item = &'a Gaussian3D;
    type IntoIter = std::slice::Iter<'a, Gaussian3D>;

    fn into_iter(self) -> Self::IntoIter {
        self.gaussians.iter()
    }
}
