//! Skinned Gaussian bodies, linear blend skinning and motion clips.
//!
//! Bodies live in a canonical frame with `+x` forward, `+y` left and `+z`
//! up. Joint rotations are local, relative to the rest pose, so the identity
//! pose reproduces the canonical Gaussians exactly.

mod contact;
mod locomotion;
mod test_body;
mod transition;

pub use contact::{contact_flags, detect_contacts, ContactThresholds, DEFAULT_TAU_A, DEFAULT_TAU_V};
pub use locomotion::{follow_waypoints, LocomotionParams};
pub use test_body::{make_test_body, MARKER_NAMES};
pub use transition::{
    hold_clip, optimize_transition, transition_gradient, transition_loss, ActionPreset, LossBreakdown,
    TransitionModel, TransitionOutcome, TransitionProblem, TransitionWeights, DEFAULT_BODY_SAMPLES, DEFAULT_R_BODY,
};

use std::path::Path as FsPath;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{Quat, Real, V3};
use crate::error::{Error, Result};
use crate::gauss::{Gaussian3D, GaussianSet};
use crate::spatial::SpatialGrid;

/// Sparse skinning weights: `(joint, weight)` pairs.
pub type WeightRow = Vec<(usize, f64)>;

pub const MAX_INFLUENCES: usize = 4;
pub const DEFAULT_CONTACT_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Canonical rest position.
    pub rest: [f64; 3],
}

/// Joint hierarchy. Joint 0 is the root and every parent precedes its children.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::arg("skeleton needs at least one joint"));
        }
        for (i, j) in joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(Error::arg("joint 0 must be the root")),
                (_, None) => return Err(Error::arg(format!("joint {} is a second root", j.name))),
                (_, Some(p)) if p >= i => {
                    return Err(Error::arg(format!("joint {} must come after its parent", j.name)))
                }
                _ => {}
            }
            if !j.rest.iter().all(|v| v.is_finite()) {
                return Err(Error::arg(format!("joint {} has a non-finite rest position", j.name)));
            }
            if joints[..i].iter().any(|o| o.name == j.name) {
                return Err(Error::arg(format!("duplicate joint name {}", j.name)));
            }
        }
        Ok(Self { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn names(&self) -> Vec<String> {
        self.joints.iter().map(|j| j.name.clone()).collect()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// World rotations and rest-relative displacements of every joint.
    pub fn forward<S: Real>(&self, root: &V3<S>, local: &[Quat<S>]) -> Kinematics<S> {
        let n = self.joints.len();
        let mut rot: Vec<Quat<S>> = Vec::with_capacity(n);
        let mut delta: Vec<V3<S>> = Vec::with_capacity(n);
        for (b, j) in self.joints.iter().enumerate() {
            match j.parent {
                None => {
                    rot.push(local[b]);
                    delta.push(*root);
                }
                Some(p) => {
                    let pr = self.joints[p].rest;
                    let off = V3::cst([j.rest[0] - pr[0], j.rest[1] - pr[1], j.rest[2] - pr[2]]);
                    let d = delta[p] + (rot[p].rotate(&off) - off);
                    rot.push(rot[p].mul(&local[b]));
                    delta.push(d);
                }
            }
        }
        Kinematics {
            rest: self.joints.iter().map(|j| j.rest).collect(),
            rot,
            delta,
        }
    }
}

/// Posed joint state. Joint `b` maps a canonical point `x` to
/// `x + rot_b (x - rest_b) - (x - rest_b) + delta_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics<S> {
    pub rest: Vec<[f64; 3]>,
    pub rot: Vec<Quat<S>>,
    pub delta: Vec<V3<S>>,
}

impl<S: Real> Kinematics<S> {
    /// World position of joint `b`.
    pub fn joint_position(&self, b: usize) -> V3<S> {
        V3::cst(self.rest[b]) + self.delta[b]
    }

    /// Blend-skinned position of canonical point `x`.
    pub fn skin_point(&self, x: &[f64; 3], row: &[(usize, f64)]) -> V3<S> {
        let xs = V3::<S>::cst(*x);
        let mut acc = V3::<S>::zero();
        for &(b, w) in row {
            let r = self.rest[b];
            let local = V3::cst([x[0] - r[0], x[1] - r[1], x[2] - r[2]]);
            let moved = self.rot[b].rotate(&local) - local + self.delta[b];
            acc = acc + moved.scale(S::cst(w));
        }
        xs + acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub position: [f64; 3],
    pub weights: WeightRow,
}

/// Canonical Gaussian body with skinning weights and contact markers.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinnedBody {
    gaussians: GaussianSet,
    skeleton: Skeleton,
    weights: Vec<WeightRow>,
    markers: Vec<Marker>,
}

fn validate_row(row: &[(usize, f64)], joints: usize, what: &str) -> Result<()> {
    if row.is_empty() || row.len() > MAX_INFLUENCES {
        return Err(Error::arg(format!("{what}: needs 1 to {MAX_INFLUENCES} influences")));
    }
    let mut sum = 0.0;
    for &(b, w) in row {
        if b >= joints {
            return Err(Error::arg(format!("{what}: joint index {b} out of range")));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::arg(format!("{what}: negative or non-finite weight {w}")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::arg(format!("{what}: weights sum to {sum}")));
    }
    Ok(())
}

impl SkinnedBody {
    pub fn new(gaussians: GaussianSet, skeleton: Skeleton, weights: Vec<WeightRow>, markers: Vec<Marker>) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::arg("body has no gaussians"));
        }
        if weights.len() != gaussians.len() {
            return Err(Error::arg(format!(
                "{} weight rows for {} gaussians",
                weights.len(),
                gaussians.len()
            )));
        }
        for (i, row) in weights.iter().enumerate() {
            validate_row(row, skeleton.len(), &format!("weight row {i}"))?;
        }
        for (i, m) in markers.iter().enumerate() {
            validate_row(&m.weights, skeleton.len(), &format!("marker {}", m.name))?;
            if markers[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::arg(format!("duplicate marker {}", m.name)));
            }
        }
        Ok(Self {
            gaussians,
            skeleton,
            weights,
            markers,
        })
    }

    pub fn gaussians(&self) -> &GaussianSet {
        &self.gaussians
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn weights(&self) -> &[WeightRow] {
        &self.weights
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn joint_count(&self) -> usize {
        self.skeleton.len()
    }

    pub fn marker(&self, name: &str) -> Result<&Marker> {
        self.markers
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::arg(format!("unknown marker {name}")))
    }

    /// Contact markers followed by `count` canonical centers taken at a uniform index stride.
    pub fn collision_samples(&self, count: usize) -> Vec<([f64; 3], WeightRow)> {
        let mut out: Vec<_> = self.markers.iter().map(|m| (m.position, m.weights.clone())).collect();
        let n = self.gaussians.len();
        let count = count.min(n);
        for i in 0..count {
            let k = i * n / count;
            out.push((self.gaussians.as_slice()[k].center().into(), self.weights[k].clone()));
        }
        out
    }

    pub fn to_record(&self) -> BodyRecord {
        BodyRecord {
            joints: self.skeleton.joints.clone(),
            gaussians: self
                .gaussians
                .iter()
                .map(|g| {
                    let q = g.rotation();
                    GaussianRecord {
                        center: g.center().into(),
                        scale: g.scale().into(),
                        rotation: [q.w, q.i, q.j, q.k],
                        opacity: g.opacity(),
                        color: g.color().into(),
                    }
                })
                .collect(),
            weights: self.weights.clone(),
            markers: self.markers.clone(),
        }
    }

    pub fn from_record(r: BodyRecord) -> Result<Self> {
        let gaussians = r
            .gaussians
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let [w, x, y, z] = g.rotation;
                Gaussian3D::new(
                    g.center.into(),
                    g.scale.into(),
                    Quaternion::new(w, x, y, z),
                    g.opacity,
                    g.color.into(),
                )
                .map_err(|e| Error::Data {
                    index: i,
                    message: e.to_string(),
                })
            })
            .collect::<Result<GaussianSet>>()?;
        Self::new(gaussians, Skeleton::new(r.joints)?, r.weights, r.markers)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let record: BodyRecord =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::from_record(record)
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_record())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// On-disk form of a [`SkinnedBody`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyRecord {
    pub joints: Vec<Joint>,
    pub gaussians: Vec<GaussianRecord>,
    pub weights: Vec<WeightRow>,
    pub markers: Vec<Marker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianRecord {
    pub center: [f64; 3],
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color: [f64; 3],
}

/// Local joint rotations plus root translation at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub time: f64,
    pub root_translation: Vector3<f64>,
    pub rotations: Vec<UnitQuaternion<f64>>,
}

impl Pose {
    pub fn identity(joints: usize, time: f64) -> Self {
        Self {
            time,
            root_translation: Vector3::zeros(),
            rotations: vec![UnitQuaternion::identity(); joints],
        }
    }

    pub fn kinematics(&self, skeleton: &Skeleton) -> Result<Kinematics<f64>> {
        if self.rotations.len() != skeleton.len() {
            return Err(Error::arg(format!(
                "pose has {} rotations for {} joints",
                self.rotations.len(),
                skeleton.len()
            )));
        }
        let local: Vec<Quat<f64>> = self.rotations.iter().map(quat_of).collect();
        Ok(skeleton.forward(&V3(self.root_translation.into()), &local))
    }

    /// Root translation followed by every quaternion component.
    pub fn coords(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.root_translation.iter().copied().collect();
        for q in &self.rotations {
            v.extend_from_slice(&[q.w, q.i, q.j, q.k]);
        }
        v
    }
}

pub(crate) fn quat_of(q: &UnitQuaternion<f64>) -> Quat<f64> {
    Quat::cst([q.w, q.i, q.j, q.k])
}

/// Unit quaternion from raw components, kept verbatim when already normalized.
pub(crate) fn unit_from(c: [f64; 4]) -> UnitQuaternion<f64> {
    let q = Quaternion::new(c[0], c[1], c[2], c[3]);
    let n = q.norm();
    if (n - 1.0).abs() <= 1e-12 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    }
}

/// Poses the body: blend-skinned centers, blended orientation, other attributes untouched.
pub fn pose_body(body: &SkinnedBody, pose: &Pose) -> Result<GaussianSet> {
    let kin = pose.kinematics(&body.skeleton)?;
    let world: Vec<UnitQuaternion<f64>> = kin.rot.iter().map(|q| unit_from(q.coords())).collect();
    let out: Vec<Gaussian3D> = body
        .gaussians
        .as_slice()
        .par_iter()
        .zip(body.weights.par_iter())
        .map(|(g, row)| {
            let x: [f64; 3] = g.center().into();
            let c = kin.skin_point(&x, row);
            g.with_pose(Vector3::from(c.0), &blend_rotations(&world, row))
        })
        .collect();
    Ok(GaussianSet::new(out))
}

/// Normalized weighted quaternion sum, each bone flipped into the hemisphere
/// of the highest-weight bone.
pub fn blend_rotations(world: &[UnitQuaternion<f64>], row: &[(usize, f64)]) -> UnitQuaternion<f64> {
    let &(lead, _) = row
        .iter()
        .fold(None, |best: Option<&(usize, f64)>, e| match best {
            Some(b) if b.1 >= e.1 => Some(b),
            _ => Some(e),
        })
        .expect("non-empty weight row");
    if row.len() == 1 {
        return world[lead];
    }
    let q0 = world[lead].quaternion();
    let mut acc = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for &(b, w) in row {
        let q = world[b].quaternion();
        let s = if q.coords.dot(&q0.coords) >= 0.0 { w } else { -w };
        acc += q * s;
    }
    UnitQuaternion::new_normalize(acc)
}

/// Each canonical Gaussian takes the row of its nearest template point (smaller index on ties).
pub fn lift_weights(canonical: &GaussianSet, template: &[(Vector3<f64>, WeightRow)]) -> Result<Vec<WeightRow>> {
    if template.is_empty() {
        return Err(Error::arg("template has no points"));
    }
    let grid = SpatialGrid::<3>::new(template.iter().map(|(p, _)| (*p).into()).collect());
    Ok(canonical
        .iter()
        .map(|g| {
            let (i, _) = grid.nearest(&g.center().into()).expect("non-empty template");
            template[i].1.clone()
        })
        .collect())
}

/// Indices of the `k` canonical Gaussians nearest to the named marker, nearest first.
pub fn lift_contact_indices(body: &SkinnedBody, marker: &str, k: usize) -> Result<Vec<usize>> {
    let m = body.marker(marker)?;
    let u = Vector3::from(m.position);
    let mut order: Vec<(f64, usize)> = body
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| ((g.center() - u).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Per-frame contact flags for a set of named tracks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactFlags {
    pub names: Vec<String>,
    /// `flags[c][t]`.
    pub flags: Vec<Vec<bool>>,
}

impl ContactFlags {
    pub fn get(&self, name: &str) -> Option<&[bool]> {
        self.names.iter().position(|n| n == name).map(|i| self.flags[i].as_slice())
    }
}

/// Fixed-rate pose sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    fps: f64,
    joint_names: Vec<String>,
    poses: Vec<Pose>,
    contacts: ContactFlags,
}

impl MotionClip {
    pub fn new(fps: f64, joint_names: Vec<String>, poses: Vec<Pose>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::arg(format!("fps must be positive, got {fps}")));
        }
        if poses.is_empty() {
            return Err(Error::arg("clip has no frames"));
        }
        for (i, p) in poses.iter().enumerate() {
            if p.rotations.len() != joint_names.len() {
                return Err(Error::arg(format!("frame {i} has {} rotations", p.rotations.len())));
            }
            if i > 0 && !(p.time > poses[i - 1].time) {
                return Err(Error::arg(format!("timestamps not increasing at frame {i}")));
            }
            let finite = p.time.is_finite()
                && p.root_translation.iter().all(|v| v.is_finite())
                && p.rotations.iter().all(|q| q.coords.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::arg(format!("frame {i} is not finite")));
            }
        }
        Ok(Self {
            fps,
            joint_names,
            poses,
            contacts: ContactFlags::default(),
        })
    }

    pub fn with_contacts(mut self, contacts: ContactFlags) -> Result<Self> {
        if contacts.names.len() != contacts.flags.len() {
            return Err(Error::arg("contact names and flag rows differ in count"));
        }
        if let Some(row) = contacts.flags.iter().find(|r| r.len() != self.poses.len()) {
            return Err(Error::arg(format!(
                "contact flags cover {} of {} frames",
                row.len(),
                self.poses.len()
            )));
        }
        self.contacts = contacts;
        Ok(self)
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn contacts(&self) -> &ContactFlags {
        &self.contacts
    }

    pub fn last(&self) -> &Pose {
        self.poses.last().expect("clips are non-empty")
    }

    /// Appends `other` after this clip, retiming it to continue at the frame rate.
    /// Contact flags are dropped.
    pub fn append(&mut self, other: &MotionClip) -> Result<()> {
        if other.joint_names != self.joint_names || other.fps != self.fps {
            return Err(Error::arg("clips differ in joints or frame rate"));
        }
        let n0 = self.poses.len();
        let t0 = self.poses[0].time;
        for (i, p) in other.poses.iter().enumerate() {
            let mut p = p.clone();
            p.time = t0 + (n0 + i) as f64 / self.fps;
            self.poses.push(p);
        }
        self.contacts = ContactFlags::default();
        Ok(())
    }

    /// World positions of joints or markers per frame, `tracks[c][t]`.
    pub fn tracks(&self, body: &SkinnedBody, names: &[&str]) -> Result<Vec<Vec<Vector3<f64>>>> {
        enum Src<'a> {
            Joint(usize),
            Marker(&'a Marker),
        }
        let sources = names
            .iter()
            .map(|n| match body.skeleton.index(n) {
                Some(j) => Ok(Src::Joint(j)),
                None => body
                    .marker(n)
                    .map(Src::Marker)
                    .map_err(|_| Error::arg(format!("unknown joint or marker {n}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let kins = self
            .poses
            .iter()
            .map(|p| p.kinematics(&body.skeleton))
            .collect::<Result<Vec<_>>>()?;
        Ok(sources
            .iter()
            .map(|s| {
                kins.iter()
                    .map(|k| {
                        let p = match s {
                            Src::Joint(j) => k.joint_position(*j),
                            Src::Marker(m) => k.skin_point(&m.position, &m.weights),
                        };
                        Vector3::from(p.0)
                    })
                    .collect()
            })
            .collect())
    }

    pub fn to_record(&self) -> ClipRecord {
        ClipRecord {
            fps: self.fps,
            joint_names: self.joint_names.clone(),
            frames: self
                .poses
                .iter()
                .map(|p| FrameRecord {
                    time: p.time,
                    root_translation: p.root_translation.into(),
                    rotations: p.rotations.iter().map(|q| [q.w, q.i, q.j, q.k]).collect(),
                })
                .collect(),
            contacts: self.contacts.clone(),
        }
    }

    pub fn from_record(r: ClipRecord) -> Result<Self> {
        let poses = r
            .frames
            .into_iter()
            .map(|f| Pose {
                time: f.time,
                root_translation: f.root_translation.into(),
                rotations: f.rotations.into_iter().map(unit_from).collect(),
            })
            .collect();
        Self::new(r.fps, r.joint_names, poses)?.with_contacts(r.contacts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ClipRecord = serde_json::from_str(text).map_err(|e| Error::Format(format!("motion clip: {e}")))?;
        Self::from_record(r)
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub fps: f64,
    pub joint_names: Vec<String>,
    pub frames: Vec<FrameRecord>,
    #[serde(default)]
    pub contacts: ContactFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub time: f64,
    pub root_translation: [f64; 3],
    /// `(w, x, y, z)` per joint.
    pub rotations: Vec<[f64; 4]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Skeleton {
        Skeleton::new(vec![
            Joint { name: "a".into(), parent: None, rest: [0.0, 0.0, 0.0] },
            Joint { name: "b".into(), parent: Some(0), rest: [0.0, 0.0, 1.0] },
            Joint { name: "c".into(), parent: Some(1), rest: [0.0, 0.0, 2.0] },
        ])
        .unwrap()
    }

    #[test]
    fn skeleton_validation() {
        let j = |name: &str, parent| Joint { name: name.into(), parent, rest: [0.0; 3] };
        assert!(Skeleton::new(vec![]).is_err());
        assert!(Skeleton::new(vec![j("a", None), j("b", None)]).is_err());
        assert!(Skeleton::new(vec![j("a", None), j("b", Some(2)), j("c", Some(1))]).is_err());
        assert!(Skeleton::new(vec![j("a", None), j("a", Some(0))]).is_err());
    }

    #[test]
    fn forward_kinematics_rotates_children() {
        let s = chain();
        let mut local = vec![Quat::<f64>::identity(); 3];
        local[1] = Quat::exp(&V3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let k = s.forward(&V3::new(1.0, 0.0, 0.0), &local);
        let c = k.joint_position(2).0;
        // rotating about +x by 90 degrees sends +z to -y
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 1.0).abs() < 1e-12 && (c[2] - 1.0).abs() < 1e-12);
        assert_eq!(k.joint_position(1).0, [1.0, 0.0, 1.0]);
    }

    #[test]
    fn blended_translation_is_midpoint() {
        let k = Kinematics::<f64> {
            rest: vec![[0.0; 3], [0.0, 0.0, 1.0]],
            rot: vec![Quat::identity(); 2],
            delta: vec![V3::new(0.0, 0.0, 0.0), V3::new(0.0, 0.0, 1.0)],
        };
        let p = k.skin_point(&[0.3, -0.2, 0.7], &[(0, 0.5), (1, 0.5)]);
        assert_eq!(p.0, [0.3, -0.2, 1.2]);
    }

    #[test]
    fn hemisphere_alignment_in_blend() {
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4);
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        let b = blend_rotations(&[q, neg], &[(0, 0.7), (1, 0.3)]);
        assert!(b.angle_to(&q) < 1e-12);
    }

    #[test]
    fn clip_rejects_bad_timestamps() {
        let names = vec!["a".to_string()];
        let p = |t| Pose::identity(1, t);
        assert!(MotionClip::new(30.0, names.clone(), vec![p(0.0), p(0.0)]).is_err());
        assert!(MotionClip::new(30.0, names.clone(), vec![]).is_err());
        let c = MotionClip::new(30.0, names, vec![p(0.0), p(0.1)]).unwrap();
        let bad = ContactFlags { names: vec!["a".into()], flags: vec![vec![true]] };
        assert!(c.with_contacts(bad).is_err());
    }
}
