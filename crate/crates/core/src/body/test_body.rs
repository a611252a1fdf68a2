//! Procedural capsule human used by tests, demos and the CLI default.

use nalgebra::Vector3;

use super::{Joint, Marker, SkinnedBody, Skeleton, WeightRow};
use crate::gauss::{Gaussian3D, GaussianSet};

pub const MARKER_NAMES: [&str; 5] = ["left_foot", "right_foot", "pelvis", "left_hand", "right_hand"];

const TARGET_GAUSSIANS: f64 = 2000.0;
const BLEND_SPAN: f64 = 0.15;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

// name, parent, rest position for a 1.8 m body
const JOINTS: [(&str, Option<usize>, [f64; 3]); 16] = [
    ("pelvis", None, [0.0, 0.0, 0.95]),
    ("spine", Some(0), [0.0, 0.0, 1.10]),
    ("chest", Some(1), [0.0, 0.0, 1.30]),
    ("head", Some(2), [0.0, 0.0, 1.55]),
    ("l_shoulder", Some(2), [0.0, 0.19, 1.42]),
    ("r_shoulder", Some(2), [0.0, -0.19, 1.42]),
    ("l_elbow", Some(4), [0.0, 0.20, 1.14]),
    ("r_elbow", Some(5), [0.0, -0.20, 1.14]),
    ("l_wrist", Some(6), [0.0, 0.20, 0.89]),
    ("r_wrist", Some(7), [0.0, -0.20, 0.89]),
    ("l_hip", Some(0), [0.0, 0.09, 0.91]),
    ("r_hip", Some(0), [0.0, -0.09, 0.91]),
    ("l_knee", Some(10), [0.0, 0.09, 0.50]),
    ("r_knee", Some(11), [0.0, -0.09, 0.50]),
    ("l_ankle", Some(12), [0.0, 0.09, 0.09]),
    ("r_ankle", Some(13), [0.0, -0.09, 0.09]),
];

struct Capsule {
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
    joint: usize,
    /// Joint at the `b` end, blended in near that end.
    child: Option<usize>,
    color: [f64; 3],
}

const SKIN: [f64; 3] = [0.85, 0.66, 0.55];
const SHIRT: [f64; 3] = [0.20, 0.35, 0.70];
const TROUSERS: [f64; 3] = [0.22, 0.22, 0.25];
const SHOES: [f64; 3] = [0.10, 0.08, 0.07];

fn capsules() -> Vec<Capsule> {
    let j = |i: usize| JOINTS[i].2;
    let c = |a, b, radius, joint, child, color| Capsule { a, b, radius, joint, child, color };
    vec![
        c(j(11), j(10), 0.11, 0, None, TROUSERS),
        c(j(0), j(1), 0.12, 0, Some(1), SHIRT),
        c(j(1), j(2), 0.13, 1, Some(2), SHIRT),
        c(j(2), [0.0, 0.0, 1.46], 0.13, 2, None, SHIRT),
        c(j(5), j(4), 0.06, 2, None, SHIRT),
        c([0.0, 0.0, 1.60], [0.0, 0.0, 1.70], 0.10, 3, None, SKIN),
        c(j(4), j(6), 0.045, 4, Some(6), SHIRT),
        c(j(5), j(7), 0.045, 5, Some(7), SHIRT),
        c(j(6), j(8), 0.04, 6, Some(8), SKIN),
        c(j(7), j(9), 0.04, 7, Some(9), SKIN),
        c(j(8), [0.0, 0.20, 0.80], 0.035, 8, None, SKIN),
        c(j(9), [0.0, -0.20, 0.80], 0.035, 9, None, SKIN),
        c(j(10), j(12), 0.07, 10, Some(12), TROUSERS),
        c(j(11), j(13), 0.07, 11, Some(13), TROUSERS),
        c(j(12), j(14), 0.055, 12, Some(14), TROUSERS),
        c(j(13), j(15), 0.055, 13, Some(15), TROUSERS),
        c([-0.03, 0.09, 0.04], [0.15, 0.09, 0.04], 0.04, 14, None, SHOES),
        c([-0.03, -0.09, 0.04], [0.15, -0.09, 0.04], 0.04, 15, None, SHOES),
    ]
}

fn orthonormal(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = axis.cross(&helper).normalize();
    (u, axis.cross(&u))
}

/// Capsule humanoid of the given height over a 16-joint hierarchy.
///
/// Panics if `height` is not positive and finite.
pub fn make_test_body(height: f64) -> SkinnedBody {
    assert!(height > 0.0 && height.is_finite(), "height must be positive");
    let caps = capsules();
    let area = |c: &Capsule| {
        let len = (Vector3::from(c.b) - Vector3::from(c.a)).norm();
        2.0 * std::f64::consts::PI * c.radius * (len + 2.0 * c.radius)
    };
    let total: f64 = caps.iter().map(area).sum();

    let mut points = Vec::new();
    let mut rows: Vec<WeightRow> = Vec::new();
    for cap in &caps {
        let n = ((TARGET_GAUSSIANS * area(cap) / total).round() as usize).max(8);
        let a = Vector3::from(cap.a);
        let axis_full = Vector3::from(cap.b) - a;
        let len = axis_full.norm();
        let axis = axis_full / len;
        let (u, v) = orthonormal(&axis);
        let sigma = (area(cap) / n as f64).sqrt() * 0.6;
        let parent = JOINTS[cap.joint].1;
        for i in 0..n {
            // uniform in the axial coordinate is uniform in area on a capsule
            let s = -cap.radius + (i as f64 + 0.5) / n as f64 * (len + 2.0 * cap.radius);
            let (base, ring) = if s < 0.0 {
                (s, (cap.radius * cap.radius - s * s).max(0.0).sqrt())
            } else if s > len {
                (s, (cap.radius * cap.radius - (s - len) * (s - len)).max(0.0).sqrt())
            } else {
                (s, cap.radius)
            };
            let phi = i as f64 * GOLDEN_ANGLE;
            let p = a + axis * base + (u * phi.cos() + v * phi.sin()) * ring;
            points.push((p, sigma, cap.color));

            let t = (s / len).clamp(0.0, 1.0);
            let mut row: WeightRow = vec![(cap.joint, 1.0)];
            if let (Some(p), true) = (parent, t < BLEND_SPAN && cap.child.is_some()) {
                let w = 0.5 * (1.0 - t / BLEND_SPAN);
                row = vec![(cap.joint, 1.0 - w), (p, w)];
            }
            if let (Some(c), true) = (cap.child, t > 1.0 - BLEND_SPAN) {
                let w = 0.5 * (t - (1.0 - BLEND_SPAN)) / BLEND_SPAN;
                row = vec![(cap.joint, 1.0 - w), (c, w)];
            }
            rows.push(row);
        }
    }

    // flat soles under the shoe capsules
    for (ankle, y) in [(14usize, 0.09), (15, -0.09)] {
        for i in 0..=12 {
            for j in -2..=2 {
                let p = Vector3::new(-0.03 + 0.015 * i as f64, y + 0.0175 * j as f64, 0.0);
                points.push((p, 0.008, SHOES));
                rows.push(vec![(ankle, 1.0)]);
            }
        }
    }

    let zmin = points.iter().map(|(p, _, _)| p.z).fold(f64::INFINITY, f64::min);
    let k = height / 1.8;
    let place = |p: &[f64; 3]| [p[0] * k, p[1] * k, (p[2] - zmin) * k];

    let gaussians: GaussianSet = points
        .iter()
        .map(|(p, sigma, color)| {
            Gaussian3D::isotropic(Vector3::from(place(&(*p).into())), sigma * k, 0.95, Vector3::from(*color))
                .expect("valid body gaussian")
        })
        .collect();

    let joints = JOINTS
        .iter()
        .map(|(name, parent, rest)| Joint {
            name: (*name).to_string(),
            parent: *parent,
            rest: place(rest),
        })
        .collect();
    let skeleton = Skeleton::new(joints).expect("valid test skeleton");

    let marker = |name: &str, p: [f64; 3], joint: usize| Marker {
        name: name.to_string(),
        position: place(&p),
        weights: vec![(joint, 1.0)],
    };
    let markers = vec![
        marker("left_foot", [0.05, 0.09, zmin], 14),
        marker("right_foot", [0.05, -0.09, zmin], 15),
        marker("pelvis", [-0.02, 0.0, 0.84], 0),
        marker("left_hand", [0.0, 0.20, 0.80], 8),
        marker("right_hand", [0.0, -0.20, 0.80], 9),
    ];
    SkinnedBody::new(gaussians, skeleton, rows, markers).expect("valid test body")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions() {
        let b = make_test_body(1.8);
        let n = b.gaussians().len();
        assert!((1800..=2300).contains(&n), "{n}");
        let zs: Vec<f64> = b.gaussians().iter().map(|g| g.center().z).collect();
        let lo = zs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((1.75..=1.85).contains(&(hi - lo)), "{}", hi - lo);
        for name in ["left_foot", "right_foot"] {
            assert!((b.marker(name).unwrap().position[2] - lo).abs() < 0.02);
        }
        assert_eq!(b.joint_count(), 16);
    }

    #[test]
    fn rows_are_stochastic() {
        let b = make_test_body(1.6);
        for row in b.weights() {
            let s: f64 = row.iter().map(|e| e.1).sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|e| e.1 >= 0.0));
        }
        assert!(b.weights().iter().any(|r| r.len() == 2));
    }
}
