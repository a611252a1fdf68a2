//! Deterministic waypoint-following walk with a procedural gait.

use std::f64::consts::{PI, TAU};

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::{MotionClip, Pose, SkinnedBody};
use crate::error::{Error, Result};
use crate::nav::WalkMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LocomotionParams {
    /// Meters per second.
    pub speed: f64,
    /// Radians per second.
    pub turn_rate: f64,
    pub corner_radius: f64,
    /// Meters travelled per gait cycle.
    pub stride: f64,
    /// Distance over which the gait fades in and out at the ends.
    pub ramp: f64,
    /// Aligned-frame floor height the feet rest on.
    pub floor_height: f64,
    /// Seconds over which a seed pose blends into the gait.
    pub blend_seconds: f64,
}

impl Default for LocomotionParams {
    fn default() -> Self {
        Self {
            speed: 1.2,
            turn_rate: PI,
            corner_radius: 0.3,
            stride: 1.4,
            ramp: 0.3,
            floor_height: 0.0,
            blend_seconds: 0.3,
        }
    }
}

const SAMPLE_SPACING: f64 = 0.01;
const HIP_SWING: f64 = 0.45;
const KNEE_FLEX: f64 = 0.6;
const ARM_SWING: f64 = 0.35;
const ELBOW_FLEX: f64 = 0.25;

fn walkable(map: &WalkMap, p: &Vector2<f64>) -> bool {
    map.sample(p) == 1
}

fn push_line(out: &mut Vec<Vector2<f64>>, a: Vector2<f64>, b: Vector2<f64>) {
    let n = ((b - a).norm() / SAMPLE_SPACING).ceil().max(1.0) as usize;
    for i in 1..=n {
        out.push(a + (b - a) * (i as f64 / n as f64));
    }
}

fn bezier(a: Vector2<f64>, c: Vector2<f64>, b: Vector2<f64>, rho: f64) -> Vec<Vector2<f64>> {
    let n = ((2.0 * rho) / SAMPLE_SPACING).ceil().max(2.0) as usize;
    (1..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            a * (1.0 - t) * (1.0 - t) + c * (2.0 * t * (1.0 - t)) + b * (t * t)
        })
        .collect()
}

/// Densely sampled polyline with rounded corners; corners shrink until every sample is walkable.
fn smoothed_path(pts: &[Vector2<f64>], map: &WalkMap, radius: f64) -> Result<Vec<Vector2<f64>>> {
    let mut out = vec![pts[0]];
    let mut cursor = pts[0];
    for i in 1..pts.len() {
        if i + 1 == pts.len() {
            push_line(&mut out, cursor, pts[i]);
            break;
        }
        let (p, q, r) = (pts[i - 1], pts[i], pts[i + 1]);
        let din = (q - p).normalize();
        let dout = (r - q).normalize();
        let mut rho = radius.min(0.5 * (q - p).norm()).min(0.5 * (r - q).norm());
        let mut corner = Vec::new();
        for attempt in 0..=6 {
            if attempt == 6 {
                rho = 0.0;
            }
            if rho <= 0.0 {
                corner = vec![q];
                break;
            }
            let curve = bezier(q - din * rho, q, q + dout * rho, rho);
            if curve.iter().all(|s| walkable(map, s)) {
                corner = curve;
                break;
            }
            rho *= 0.5;
        }
        push_line(&mut out, cursor, q - din * rho);
        out.extend(corner);
        cursor = *out.last().expect("non-empty path");
    }
    if let Some(k) = out.iter().position(|s| !walkable(map, s)) {
        return Err(Error::arg(format!(
            "path between waypoints crosses a blocked cell near ({:.3}, {:.3})",
            out[k].x, out[k].y
        )));
    }
    Ok(out)
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let f = q * Vector3::x();
    f.y.atan2(f.x)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

struct Cursor<'a> {
    pts: &'a [Vector2<f64>],
    cum: Vec<f64>,
}

impl<'a> Cursor<'a> {
    fn new(pts: &'a [Vector2<f64>]) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { pts, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position and unit tangent at arc length `s`.
    fn at(&self, s: f64) -> (Vector2<f64>, Vector2<f64>) {
        if s >= self.length() {
            let n = self.pts.len();
            let t = self.pts[n - 1] - self.pts[n - 2];
            return (self.pts[n - 1], t.normalize());
        }
        let i = self.cum.partition_point(|&c| c <= s).clamp(1, self.pts.len() - 1);
        let (a, b) = (self.pts[i - 1], self.pts[i]);
        let seg = self.cum[i] - self.cum[i - 1];
        let t = if seg > 0.0 { (s - self.cum[i - 1]) / seg } else { 0.0 };
        (a + (b - a) * t, (b - a).normalize())
    }
}

fn gait(body: &SkinnedBody, phase: f64, amp: f64) -> Vec<UnitQuaternion<f64>> {
    let mut rot = vec![UnitQuaternion::identity(); body.joint_count()];
    let sk = body.skeleton();
    let mut set = |name: &str, angle: f64| {
        if let Some(j) = sk.index(name) {
            rot[j] = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle);
        }
    };
    let (s, c) = phase.sin_cos();
    set("l_hip", -HIP_SWING * amp * s);
    set("r_hip", HIP_SWING * amp * s);
    set("l_knee", KNEE_FLEX * amp * c.max(0.0));
    set("r_knee", KNEE_FLEX * amp * (-c).max(0.0));
    set("l_shoulder", ARM_SWING * amp * s);
    set("r_shoulder", -ARM_SWING * amp * s);
    set("l_elbow", -ELBOW_FLEX * amp);
    set("r_elbow", -ELBOW_FLEX * amp);
    rot
}

/// Lowest foot marker height of the pose with its root translation `z` zeroed.
fn foot_height(body: &SkinnedBody, pose: &Pose) -> Result<f64> {
    let kin = pose.kinematics(body.skeleton())?;
    let mut lo = f64::INFINITY;
    for name in ["left_foot", "right_foot"] {
        if let Ok(m) = body.marker(name) {
            lo = lo.min(kin.skin_point(&m.position, &m.weights).0[2]);
        }
    }
    if lo.is_infinite() {
        lo = body.gaussians().iter().map(|g| g.center().z).fold(f64::INFINITY, f64::min) + pose.root_translation.z;
    }
    Ok(lo - pose.root_translation.z)
}

/// Walks the root (pelvis) along `waypoints` in the aligned frame.
///
/// The first waypoint is the start. With a `seed`, the clip opens in the
/// seed's joint rotations, root orientation and height and blends into the gait.
pub fn follow_waypoints(
    body: &SkinnedBody,
    waypoints: &[Vector2<f64>],
    map: &WalkMap,
    fps: f64,
    params: &LocomotionParams,
    seed: Option<&Pose>,
) -> Result<MotionClip> {
    if waypoints.is_empty() {
        return Err(Error::arg("no waypoints"));
    }
    if !(fps > 0.0 && fps.is_finite()) || !(params.speed > 0.0) || !(params.turn_rate > 0.0) {
        return Err(Error::arg("fps, speed and turn rate must be positive"));
    }
    if let Some(s) = seed {
        if s.rotations.len() != body.joint_count() {
            return Err(Error::arg("seed pose does not match the body"));
        }
    }
    for (i, w) in waypoints.iter().enumerate() {
        if !walkable(map, w) {
            return Err(Error::arg(format!("waypoint {i} ({:.3}, {:.3}) is in a blocked cell", w.x, w.y)));
        }
    }
    let mut pts: Vec<Vector2<f64>> = vec![waypoints[0]];
    for w in &waypoints[1..] {
        if (w - pts.last().unwrap()).norm() > 1e-9 {
            pts.push(*w);
        }
    }

    let rest = body.skeleton().joints()[0].rest;
    let names = body.skeleton().names();
    let build = |xy: Vector2<f64>, heading: f64, rotations: Vec<UnitQuaternion<f64>>, time: f64| -> Result<Pose> {
        let mut rotations = rotations;
        rotations[0] = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading) * rotations[0];
        let mut pose = Pose {
            time,
            root_translation: Vector3::new(xy.x - rest[0], xy.y - rest[1], 0.0),
            rotations,
        };
        pose.root_translation.z = params.floor_height - foot_height(body, &pose)?;
        Ok(pose)
    };

    if pts.len() == 1 {
        let pose = match seed {
            Some(s) => Pose {
                time: 0.0,
                root_translation: Vector3::new(pts[0].x - rest[0], pts[0].y - rest[1], s.root_translation.z),
                rotations: s.rotations.clone(),
            },
            None => build(pts[0], 0.0, vec![UnitQuaternion::identity(); body.joint_count()], 0.0)?,
        };
        return MotionClip::new(fps, names, vec![pose]);
    }

    let dense = smoothed_path(&pts, map, params.corner_radius)?;
    let path = Cursor::new(&dense);
    let length = path.length();
    let step = params.speed / fps;
    let moving = (length / step).ceil() as usize;
    let mut arc: Vec<f64> = (0..=moving).map(|k| (k as f64 * step).min(length)).collect();
    if arc.len() < 2 || arc[arc.len() - 2] < length {
        arc.push(length);
    }

    let blend_frames = (params.blend_seconds * fps).round().max(1.0);
    let max_turn = params.turn_rate / fps;
    let mut heading = match seed {
        Some(s) => yaw_of(&s.rotations[0]),
        None => {
            let t = path.at(0.0).1;
            t.y.atan2(t.x)
        }
    };
    let mut poses = Vec::with_capacity(arc.len());
    for (k, &s) in arc.iter().enumerate() {
        let (xy, tangent) = path.at(s);
        if k > 0 {
            heading = wrap(heading + wrap(tangent.y.atan2(tangent.x) - heading).clamp(-max_turn, max_turn));
        }
        let amp = (s / params.ramp).min((length - s) / params.ramp).clamp(0.0, 1.0);
        let phase = TAU * s / params.stride;
        let time = k as f64 / fps;
        let mut pose = build(xy, heading, gait(body, phase, amp), time)?;
        if let Some(sd) = seed {
            let w = smoothstep(k as f64 / blend_frames);
            if w < 1.0 {
                let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading - yaw_of(&sd.rotations[0]));
                for (b, q) in pose.rotations.iter_mut().enumerate() {
                    let from = if b == 0 { yaw * sd.rotations[0] } else { sd.rotations[b] };
                    *q = if w == 0.0 { from } else { from.slerp(q, w) };
                }
                let z = params.floor_height - foot_height(body, &pose)?;
                pose.root_translation.z = sd.root_translation.z + (z - sd.root_translation.z) * w;
            }
        }
        poses.push(pose);
    }
    MotionClip::new(fps, names, poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::make_test_body;

    fn open_map() -> WalkMap {
        WalkMap::from_cells(100, 100, vec![1; 10_000], Vector2::new(-2.5, -2.5), 0.05).unwrap()
    }

    #[test]
    fn straight_walk_duration() {
        let body = make_test_body(1.8);
        let wp = [Vector2::new(-1.2, 0.0), Vector2::new(1.2, 0.0)];
        let clip = follow_waypoints(&body, &wp, &open_map(), 30.0, &LocomotionParams::default(), None).unwrap();
        let dur = clip.last().time - clip.poses()[0].time;
        assert!((dur - 2.0).abs() <= 1.0 / 30.0 + 1e-9, "{dur}");
        let n = clip.len();
        let end = clip.poses()[n - 1].root_translation;
        assert_eq!(end, clip.poses()[n - 2].root_translation);
    }

    #[test]
    fn feet_rest_on_floor() {
        let body = make_test_body(1.8);
        let params = LocomotionParams { floor_height: 0.4, ..Default::default() };
        let wp = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.5)];
        let clip = follow_waypoints(&body, &wp, &open_map(), 30.0, &params, None).unwrap();
        let tracks = clip.tracks(&body, &["left_foot", "right_foot"]).unwrap();
        for t in 0..clip.len() {
            let lo = tracks[0][t].z.min(tracks[1][t].z);
            assert!((lo - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn single_waypoint_stands() {
        let body = make_test_body(1.8);
        let clip = follow_waypoints(&body, &[Vector2::new(0.3, 0.2)], &open_map(), 30.0, &LocomotionParams::default(), None)
            .unwrap();
        assert_eq!(clip.len(), 1);
    }

    #[test]
    fn blocked_waypoint_rejected() {
        let mut cells = vec![1u8; 10_000];
        cells[50 * 100 + 50] = 0;
        let map = WalkMap::from_cells(100, 100, cells, Vector2::new(-2.5, -2.5), 0.05).unwrap();
        let body = make_test_body(1.8);
        let r = follow_waypoints(&body, &[Vector2::new(0.0, 0.0), Vector2::new(0.01, 0.01)], &map, 30.0, &LocomotionParams::default(), None);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn heading_turns_at_capped_rate() {
        let body = make_test_body(1.8);
        let wp = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, 1.0), Vector2::new(0.0, 1.0)];
        let clip = follow_waypoints(&body, &wp, &open_map(), 30.0, &LocomotionParams::default(), None).unwrap();
        let yaws: Vec<f64> = clip.poses().iter().map(|p| yaw_of(&p.rotations[0])).collect();
        for w in yaws.windows(2) {
            assert!(wrap(w[1] - w[0]).abs() <= PI / 30.0 + 1e-9);
        }
    }
}
