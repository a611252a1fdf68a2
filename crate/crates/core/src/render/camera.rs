use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera. Camera space follows the OpenCV convention: `+z` looks
/// forward, `+x` right, `+y` down.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

/// On-disk camera record; a trajectory file is a JSON list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub focal: [f64; 2],
    pub principal: [f64; 2],
    pub resolution: [u32; 2],
    /// World-to-camera rotation `(w, x, y, z)`.
    pub rotation: [f64; 4],
    /// World-to-camera translation.
    pub translation: [f64; 3],
}

impl Camera {
    pub fn new(
        focal: [f64; 2],
        principal: [f64; 2],
        resolution: [u32; 2],
        rotation: Rotation3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(focal[0] > 0.0 && focal[1] > 0.0) || !focal.iter().all(|f| f.is_finite()) {
            return Err(Error::arg(format!("focal lengths must be positive, got {focal:?}")));
        }
        if !principal.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::arg("camera has non-finite parameters"));
        }
        let m = rotation.matrix();
        if (m * m.transpose() - Matrix3::identity()).abs().max() > 1e-6 {
            return Err(Error::arg("camera rotation is not orthonormal"));
        }
        Ok(Self {
            fx: focal[0],
            fy: focal[1],
            cx: principal[0],
            cy: principal[1],
            width: resolution[0],
            height: resolution[1],
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` pointing towards the top of the image.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        resolution: [u32; 2],
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::arg("eye and target coincide"));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::arg("up vector is parallel to the view direction"));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        // rows are the camera axes expressed in world coordinates
        let m = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rotation = Rotation3::from_matrix_unchecked(m);
        let translation = -(rotation * eye);
        let principal = [resolution[0] as f64 / 2.0, resolution[1] as f64 / 2.0];
        Self::new([focal, focal], principal, resolution, rotation, translation)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// World-space direction of the image "up" axis.
    pub fn up_direction(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * Vector3::y())
    }

    pub fn from_record(rec: &CameraRecord) -> Result<Self> {
        let q = Quaternion::new(rec.rotation[0], rec.rotation[1], rec.rotation[2], rec.rotation[3]);
        if !(q.norm() > 1e-12) || !q.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("camera rotation quaternion is zero or non-finite"));
        }
        let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Self::new(
            rec.focal,
            rec.principal,
            rec.resolution,
            rot,
            Vector3::from(rec.translation),
        )
    }

    pub fn to_record(&self) -> CameraRecord {
        let q = UnitQuaternion::from_rotation_matrix(&self.rotation);
        CameraRecord {
            focal: [self.fx, self.fy],
            principal: [self.cx, self.cy],
            resolution: [self.width, self.height],
            rotation: [q.w, q.i, q.j, q.k],
            translation: self.translation.into(),
        }
    }
}

/// Reads a JSON camera trajectory.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CameraRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    records.iter().map(Camera::from_record).collect()
}

pub fn save_cameras(cams: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<CameraRecord> = cams.iter().map(Camera::to_record).collect();
    let text = serde_json::to_string_pretty(&records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = Camera::look_at(
            Vector3::new(3.0, -2.0, 1.5),
            Vector3::new(0.0, 0.0, 0.5),
            Vector3::z(),
            100.0,
            [64, 48],
        )
        .unwrap();
        let p = cam.to_camera(&Vector3::new(0.0, 0.0, 0.5));
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        assert!(cam.up_direction().dot(&Vector3::z()) > 0.5);
    }

    #[test]
    fn record_round_trip() {
        let cam = Camera::look_at(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros(), Vector3::z(), 50.0, [32, 32])
            .unwrap();
        let back = Camera::from_record(&cam.to_record()).unwrap();
        assert!((back.rotation().matrix() - cam.rotation().matrix()).abs().max() < 1e-12);
        assert!((back.translation() - cam.translation()).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        let rec = CameraRecord {
            focal: [0.0, 1.0],
            principal: [0.0, 0.0],
            resolution: [4, 4],
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
        };
        assert!(Camera::from_record(&rec).is_err());
        let rec = CameraRecord { focal: [1.0, 1.0], rotation: [0.0; 4], ..rec };
        assert!(Camera::from_record(&rec).is_err());
    }
}
