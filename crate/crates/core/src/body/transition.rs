//! Goal-directed transition snippets.
//!
//! The optimization variable is an explicit trajectory parameterization: a
//! clamped cubic B-spline offset on the root translation plus one rotation
//! offset per joint, faded in from zero at the first frame. Both sit on top
//! of an initial clip, so frame 0 is never changed.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{quat_of, unit_from, MotionClip, Pose, Skeleton, SkinnedBody, WeightRow};
use crate::dual::{Dual, Quat, Real, V3};
use crate::error::{Error, Result};
use crate::field::DistanceField;
use crate::optim::{minimize, Objective, OptimOptions, OptimReport};

pub const DEFAULT_R_BODY: f64 = 0.1;
pub const DEFAULT_BODY_SAMPLES: usize = 30;
const MAX_CONTROLS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionWeights {
    pub stop: f64,
    pub start: f64,
    pub collision: f64,
    pub smooth: f64,
}

impl Default for TransitionWeights {
    fn default() -> Self {
        Self {
            stop: 1.0,
            start: 100.0,
            collision: 100.0,
            smooth: 1.0,
        }
    }
}

/// Goal/anchor presets standing in for text-conditioned actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionPreset {
    /// Pelvis to the goal's ground position at standing height.
    Walk,
    /// Pelvis to the goal point.
    Sit,
    /// Right wrist to the goal point.
    Grab,
}

impl ActionPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "walk" | "stop" => Ok(Self::Walk),
            "sit" => Ok(Self::Sit),
            "grab" | "reach" => Ok(Self::Grab),
            _ => Err(Error::arg(format!("unknown action {s}"))),
        }
    }

    pub fn anchor(&self) -> &'static str {
        match self {
            Self::Walk | Self::Sit => "pelvis",
            Self::Grab => "r_wrist",
        }
    }

    /// Anchor target for a user goal, given the seed pose.
    pub fn anchor_goal(&self, body: &SkinnedBody, seed: &Pose, goal: &Vector3<f64>) -> Result<Vector3<f64>> {
        match self {
            Self::Walk => {
                let kin = seed.kinematics(body.skeleton())?;
                Ok(Vector3::new(goal.x, goal.y, kin.joint_position(0).0[2]))
            }
            Self::Sit | Self::Grab => Ok(*goal),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransitionProblem {
    pub skeleton: Skeleton,
    pub seed: Pose,
    pub goal: Vector3<f64>,
    pub anchor: usize,
    pub frames: usize,
    pub fps: f64,
    pub weights: TransitionWeights,
    /// Canonical points with skinning rows, posed at the last frame for the collision term.
    pub samples: Vec<([f64; 3], WeightRow)>,
    pub r_body: f64,
}

impl TransitionProblem {
    pub fn new(body: &SkinnedBody, seed: Pose, goal: Vector3<f64>, anchor: &str, frames: usize, fps: f64) -> Result<Self> {
        let anchor = body
            .skeleton()
            .index(anchor)
            .ok_or_else(|| Error::arg(format!("unknown anchor joint {anchor}")))?;
        let p = Self {
            skeleton: body.skeleton().clone(),
            seed,
            goal,
            anchor,
            frames,
            fps,
            weights: TransitionWeights::default(),
            samples: body.collision_samples(DEFAULT_BODY_SAMPLES),
            r_body: DEFAULT_R_BODY,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::arg("a transition needs at least 2 frames"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::arg("fps must be positive"));
        }
        let w = &self.weights;
        if [w.stop, w.start, w.collision, w.smooth, self.r_body].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::arg("loss weights and clearance must be non-negative"));
        }
        if self.anchor >= self.skeleton.len() || self.seed.rotations.len() != self.skeleton.len() {
            return Err(Error::arg("anchor or seed does not match the skeleton"));
        }
        Ok(())
    }
}

/// Unweighted terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reach: f64,
    pub stop: f64,
    pub start: f64,
    pub collision: f64,
    pub smooth: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
struct PoseS<S> {
    root: V3<S>,
    rot: Vec<Quat<S>>,
}

impl PoseS<f64> {
    fn of(p: &Pose) -> Self {
        Self {
            root: V3(p.root_translation.into()),
            rot: p.rotations.iter().map(quat_of).collect(),
        }
    }
}

fn coord_dist2<S: Real>(a: &PoseS<S>, b: &PoseS<S>) -> S {
    let mut acc = (a.root - b.root).norm2();
    for (qa, qb) in a.rot.iter().zip(&b.rot) {
        let (ca, cb) = (qa.coords(), qb.coords());
        for k in 0..4 {
            let d = ca[k] - cb[k];
            acc += d * d;
        }
    }
    acc
}

fn lift_pose<S: Real>(p: &PoseS<f64>) -> PoseS<S> {
    PoseS {
        root: V3::cst(p.root.0),
        rot: p.rot.iter().map(|q| Quat::cst(q.coords())).collect(),
    }
}

/// Terms `[reach, stop, start, collision, smooth]`. `dist` evaluates the
/// field at posed sample `i` whose position is given.
fn terms<S: Real>(
    poses: &[PoseS<S>],
    prob: &TransitionProblem,
    dist: &dyn Fn(usize, [f64; 3]) -> (f64, [f64; 3]),
) -> [S; 5] {
    let f = poses.len();
    let last = prob.skeleton.forward(&poses[f - 1].root, &poses[f - 1].rot);
    let prev = prob.skeleton.forward(&poses[f - 2].root, &poses[f - 2].rot);
    let x_f = last.joint_position(prob.anchor);
    let x_p = prev.joint_position(prob.anchor);
    let reach = (x_f - V3::cst(prob.goal.into())).norm2();
    let stop = (x_f - x_p).scale(S::cst(prob.fps)).norm2();
    let seed = lift_pose::<S>(&PoseS::of(&prob.seed));
    let start = coord_dist2(&poses[0], &seed);
    let mut collision = S::zero();
    for (i, (x, row)) in prob.samples.iter().enumerate() {
        let b = last.skin_point(x, row);
        let (d, g) = dist(i, b.re());
        let d = S::chain(d, &g, &b.0);
        let h = (S::cst(prob.r_body) - d).max0();
        collision += h * h;
    }
    let mut smooth = S::zero();
    for t in 1..f {
        smooth += coord_dist2(&poses[t], &poses[t - 1]);
    }
    smooth = smooth / S::cst((f - 1) as f64);
    [reach, stop, start, collision, smooth]
}

fn total<S: Real>(t: &[S; 5], w: &TransitionWeights) -> S {
    t[0] + S::cst(w.stop) * t[1] + S::cst(w.start) * t[2] + S::cst(w.collision) * t[3] + S::cst(w.smooth) * t[4]
}

fn field_fn(field: Option<&DistanceField>) -> impl Fn(usize, [f64; 3]) -> (f64, [f64; 3]) + '_ {
    move |_, p| match field {
        Some(fl) => {
            let (d, g) = fl.eval(&Vector3::from(p));
            (d, g.into())
        }
        None => (f64::INFINITY, [0.0; 3]),
    }
}

/// Evaluates every term on `clip`, which must have `prob.frames` frames.
pub fn transition_loss(clip: &MotionClip, prob: &TransitionProblem, field: Option<&DistanceField>) -> Result<LossBreakdown> {
    prob.validate()?;
    if clip.len() != prob.frames {
        return Err(Error::arg(format!("clip has {} frames, problem expects {}", clip.len(), prob.frames)));
    }
    if clip.joint_names().len() != prob.skeleton.len() {
        return Err(Error::arg("clip does not match the skeleton"));
    }
    let poses: Vec<PoseS<f64>> = clip.poses().iter().map(PoseS::of).collect();
    Ok(breakdown(&terms(&poses, prob, &field_fn(field)), &prob.weights))
}

fn breakdown(t: &[f64; 5], w: &TransitionWeights) -> LossBreakdown {
    LossBreakdown {
        reach: t[0],
        stop: t[1],
        start: t[2],
        collision: t[3],
        smooth: t[4],
        total: total(t, w),
    }
}

/// Clamped B-spline basis values at `u` in `[0, 1]`.
fn bspline_basis(controls: usize, u: f64) -> Vec<f64> {
    let p = 3.min(controls - 1);
    let inner = controls - p - 1;
    let mut knots = vec![0.0; p + 1];
    knots.extend((1..=inner).map(|i| i as f64 / (inner + 1) as f64));
    knots.extend(std::iter::repeat_n(1.0, p + 1));
    if u >= 1.0 {
        let mut b = vec![0.0; controls];
        b[controls - 1] = 1.0;
        return b;
    }
    let m = knots.len() - 1;
    let mut n: Vec<f64> = (0..m).map(|i| if knots[i] <= u && u < knots[i + 1] { 1.0 } else { 0.0 }).collect();
    for d in 1..=p {
        for i in 0..m - d {
            let left = if knots[i + d] > knots[i] { (u - knots[i]) / (knots[i + d] - knots[i]) * n[i] } else { 0.0 };
            let right = if knots[i + d + 1] > knots[i + 1] {
                (knots[i + d + 1] - u) / (knots[i + d + 1] - knots[i + 1]) * n[i + 1]
            } else {
                0.0
            };
            n[i] = left + right;
        }
    }
    n.truncate(controls);
    n
}

fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

/// The transition objective as a function of the trajectory parameters.
pub struct TransitionModel<'a> {
    prob: &'a TransitionProblem,
    field: Option<&'a DistanceField>,
    base: Vec<PoseS<f64>>,
    times: Vec<f64>,
    joint_names: Vec<String>,
    basis: Vec<Vec<f64>>,
    ramp: Vec<f64>,
    controls: usize,
}

impl<'a> TransitionModel<'a> {
    pub fn new(prob: &'a TransitionProblem, field: Option<&'a DistanceField>, init: &MotionClip) -> Result<Self> {
        prob.validate()?;
        if init.len() != prob.frames || init.joint_names().len() != prob.skeleton.len() {
            return Err(Error::arg(format!(
                "initial clip has {} frames and {} joints, problem expects {} and {}",
                init.len(),
                init.joint_names().len(),
                prob.frames,
                prob.skeleton.len()
            )));
        }
        let f = prob.frames;
        let controls = MAX_CONTROLS.min(f);
        let us: Vec<f64> = (0..f).map(|t| t as f64 / (f - 1) as f64).collect();
        Ok(Self {
            prob,
            field,
            base: init.poses().iter().map(PoseS::of).collect(),
            times: init.poses().iter().map(|p| p.time).collect(),
            joint_names: init.joint_names().to_vec(),
            basis: us.iter().map(|&u| bspline_basis(controls, u)).collect(),
            ramp: us.iter().map(|&u| smoothstep(u)).collect(),
            controls,
        })
    }

    /// Root control offsets (all but the first, which is pinned) then one rotation vector per joint.
    pub fn param_count(&self) -> usize {
        3 * (self.controls - 1) + 3 * self.prob.skeleton.len()
    }

    fn poses<S: Real>(&self, x: &[S]) -> Vec<PoseS<S>> {
        let nc = self.controls - 1;
        self.base
            .iter()
            .enumerate()
            .map(|(t, base)| {
                let mut root = V3::cst(base.root.0);
                for k in 1..self.controls {
                    let bk = self.basis[t][k];
                    if bk != 0.0 {
                        let c = V3([x[3 * (k - 1)], x[3 * (k - 1) + 1], x[3 * (k - 1) + 2]]);
                        root = root + c.scale(S::cst(bk));
                    }
                }
                let r = S::cst(self.ramp[t]);
                let rot = base
                    .rot
                    .iter()
                    .enumerate()
                    .map(|(b, q)| {
                        let o = 3 * nc + 3 * b;
                        let w = V3([x[o] * r, x[o + 1] * r, x[o + 2] * r]);
                        Quat::cst(q.coords()).mul(&Quat::exp(&w))
                    })
                    .collect();
                PoseS { root, rot }
            })
            .collect()
    }

    pub fn breakdown(&self, x: &[f64]) -> LossBreakdown {
        breakdown(&terms(&self.poses(x), self.prob, &field_fn(self.field)), &self.prob.weights)
    }

    pub fn clip(&self, x: &[f64]) -> Result<MotionClip> {
        let poses = self
            .poses(x)
            .into_iter()
            .zip(&self.times)
            .map(|(p, &time)| Pose {
                time,
                root_translation: Vector3::from(p.root.0),
                rotations: p.rot.iter().map(|q| unit_from(q.coords())).collect(),
            })
            .collect();
        MotionClip::new(self.prob.fps, self.joint_names.clone(), poses)
    }
}

impl Objective for TransitionModel<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        total(&terms(&self.poses(x), self.prob, &field_fn(self.field)), &self.prob.weights)
    }

    /// One forward-mode pass per parameter; field values are shared across passes.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let poses = self.poses(x);
        let f = poses.len();
        let last = self.prob.skeleton.forward(&poses[f - 1].root, &poses[f - 1].rot);
        let cache: Vec<(f64, [f64; 3])> = self
            .prob
            .samples
            .iter()
            .map(|(p, row)| field_fn(self.field)(0, last.skin_point(p, row).re()))
            .collect();
        let dist = |i: usize, _p: [f64; 3]| cache[i];
        (0..x.len())
            .into_par_iter()
            .map(|i| {
                let xd: Vec<Dual> = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| Dual::new(v, if i == j { 1.0 } else { 0.0 }))
                    .collect();
                total(&terms(&self.poses(&xd), self.prob, &dist), &self.prob.weights).eps
            })
            .collect()
    }
}

/// Gradient of the objective at parameters `x`.
pub fn transition_gradient(model: &TransitionModel<'_>, x: &[f64]) -> Vec<f64> {
    model.gradient(x)
}

/// `frames` copies of `seed` at the given rate, starting at the seed's time.
pub fn hold_clip(seed: &Pose, joint_names: Vec<String>, frames: usize, fps: f64) -> Result<MotionClip> {
    let poses = (0..frames)
        .map(|t| Pose {
            time: seed.time + t as f64 / fps,
            ..seed.clone()
        })
        .collect();
    MotionClip::new(fps, joint_names, poses)
}

#[derive(Debug, Clone)]
pub struct TransitionOutcome {
    pub clip: MotionClip,
    pub initial: LossBreakdown,
    pub result: LossBreakdown,
    pub report: OptimReport,
}

/// Minimizes the transition objective starting from `init`. The returned clip
/// never has a higher total loss than `init`.
pub fn optimize_transition(
    prob: &TransitionProblem,
    field: Option<&DistanceField>,
    init: &MotionClip,
    opts: &OptimOptions,
) -> Result<TransitionOutcome> {
    let model = TransitionModel::new(prob, field, init)?;
    let initial = transition_loss(init, prob, field)?;
    if !initial.total.is_finite() {
        return Err(Error::arg("transition loss is not finite at the initial clip"));
    }
    let report = minimize(&model, vec![0.0; model.param_count()], opts);
    let clip = model.clip(&report.x)?;
    let result = transition_loss(&clip, prob, field)?;
    if result.total <= initial.total {
        Ok(TransitionOutcome { clip, initial, result, report })
    } else {
        Ok(TransitionOutcome {
            clip: init.clone(),
            initial,
            result: initial,
            report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::make_test_body;

    #[test]
    fn basis_partition_of_unity() {
        for k in 2..=6 {
            for i in 0..=20 {
                let b = bspline_basis(k, i as f64 / 20.0);
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(b.iter().all(|&v| v >= -1e-15));
            }
            assert_eq!(bspline_basis(k, 0.0)[0], 1.0);
            assert_eq!(bspline_basis(k, 1.0)[k - 1], 1.0);
        }
    }

    #[test]
    fn standing_at_goal_is_stationary() {
        let body = make_test_body(1.8);
        let seed = Pose::identity(16, 0.0);
        let goal = Vector3::from(body.skeleton().joints()[0].rest);
        let prob = TransitionProblem::new(&body, seed.clone(), goal, "pelvis", 10, 30.0).unwrap();
        let init = hold_clip(&seed, body.skeleton().names(), 10, 30.0).unwrap();
        let l = transition_loss(&init, &prob, None).unwrap();
        assert_eq!(l.total, 0.0);
        let out = optimize_transition(&prob, None, &init, &OptimOptions::default()).unwrap();
        assert_eq!(out.clip, init);
    }

    #[test]
    fn frame_zero_is_pinned() {
        let body = make_test_body(1.8);
        let seed = Pose::identity(16, 0.0);
        let prob = TransitionProblem::new(&body, seed.clone(), Vector3::new(0.4, 0.1, 0.9), "pelvis", 12, 30.0).unwrap();
        let init = hold_clip(&seed, body.skeleton().names(), 12, 30.0).unwrap();
        let model = TransitionModel::new(&prob, None, &init).unwrap();
        let x: Vec<f64> = (0..model.param_count()).map(|i| 0.01 * (i as f64).sin()).collect();
        let clip = model.clip(&x).unwrap();
        assert_eq!(clip.poses()[0], init.poses()[0]);
    }
}
