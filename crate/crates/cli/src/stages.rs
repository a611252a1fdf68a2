use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use splatwalk::body::{
    detect_contacts, hold_clip, lift_contact_indices, make_test_body, optimize_transition, pose_body, ActionPreset,
    ContactThresholds, LocomotionParams, MotionClip, Pose, SkinnedBody, TransitionProblem,
};
use splatwalk::body::follow_waypoints;
use splatwalk::field::{cull_by_opacity, AlignedScene, AlignmentRecord, DistanceField};
use splatwalk::gauss::{load_splat_ply, GaussianSet};
use splatwalk::nav::{astar, build_walkmap, simplify_path, PlanOutcome, WalkMap, WalkMapMeta};
use splatwalk::optim::OptimOptions;
use splatwalk::refine::{
    contact_mask, penetration_report, refine, translation_offsets, ContactSet, RefineParams, RefineProblem,
    TranslationRecord,
};
use splatwalk::render::{load_cameras, render_sequence, Camera, RenderConfig};

use crate::cache::{clear_stamp, is_fresh, stamp_key, write_stamp, KeyHasher, OutputLock};
use crate::config::{PipelineConfig, Stage};
use crate::error::{io_err, CliError, CliResult};

/// Bumped whenever a stage's algorithm changes its outputs.
const CACHE_VERSION: &str = "1";

pub const CONTACT_MARKERS: [&str; 2] = ["left_foot", "right_foot"];

/// Artifact paths under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self { root: cfg.output.clone() }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        match stage {
            Stage::Render => self.root.join("frames"),
            s => self.root.join(s.name()),
        }
    }

    pub fn walkmap_pgm(&self) -> PathBuf {
        self.dir(Stage::Analyze).join("walkmap.pgm")
    }

    pub fn walkmap_meta(&self) -> PathBuf {
        self.dir(Stage::Analyze).join("walkmap.json")
    }

    pub fn alignment(&self) -> PathBuf {
        self.dir(Stage::Analyze).join("alignment.json")
    }

    pub fn clip(&self) -> PathBuf {
        self.dir(Stage::Animate).join("clip.json")
    }

    pub fn animate_report(&self) -> PathBuf {
        self.dir(Stage::Animate).join("report.json")
    }

    pub fn translations(&self) -> PathBuf {
        self.dir(Stage::Refine).join("translations.json")
    }

    pub fn refine_report(&self) -> PathBuf {
        self.dir(Stage::Refine).join("report.json")
    }

    pub fn frame(&self, i: usize) -> PathBuf {
        self.dir(Stage::Render).join(frame_name(i))
    }

    fn outputs(&self, stage: Stage, frames: usize) -> Vec<PathBuf> {
        match stage {
            Stage::Analyze => vec![self.walkmap_pgm(), self.walkmap_meta(), self.alignment()],
            Stage::Animate => vec![self.clip(), self.animate_report()],
            Stage::Refine => vec![self.translations(), self.refine_report()],
            Stage::Render => (0..frames).map(|i| self.frame(i)).collect(),
        }
    }
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.png")
}

/// What a stage did.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub cached: bool,
    pub dir: PathBuf,
}

/// Content keys of each stage, each folding in the one before it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageKeys {
    pub analyze: String,
    pub animate: String,
    pub refine: String,
    pub render: Option<String>,
}

impl StageKeys {
    pub fn compute(cfg: &PipelineConfig, upto: Stage) -> CliResult<Self> {
        let s = &cfg.scene_params;
        let analyze = KeyHasher::new("analyze")
            .bytes("version", CACHE_VERSION.as_bytes())
            .file("scene", &cfg.scene)?
            .json("params", &(s.opacity_threshold, s.cell, s.clearance, s.band))
            .finish();
        if upto == Stage::Analyze {
            return Ok(Self { analyze, animate: String::new(), refine: String::new(), render: None });
        }
        let mut h = KeyHasher::new("animate");
        h.bytes("version", CACHE_VERSION.as_bytes()).bytes("upstream", analyze.as_bytes());
        match &cfg.body.file {
            Some(p) => {
                h.file("body", p)?;
            }
            None => {
                h.json("height", &cfg.body_height());
            }
        }
        let animate = h
            .json("start", &cfg.start)
            .json("goals", &cfg.goals)
            .json("motion", &cfg.motion)
            .json("beta", &s.beta)
            .finish();
        let refine = KeyHasher::new("refine")
            .bytes("version", CACHE_VERSION.as_bytes())
            .bytes("upstream", animate.as_bytes())
            .json("refine", &cfg.refine)
            .json("beta", &s.beta)
            .finish();
        let render = match (upto, &cfg.cameras) {
            (Stage::Render, Some(c)) => Some(
                KeyHasher::new("render")
                    .bytes("version", CACHE_VERSION.as_bytes())
                    .bytes("upstream", refine.as_bytes())
                    .file("cameras", c)?
                    .json("render", &cfg.render)
                    .finish(),
            ),
            _ => None,
        };
        Ok(Self { analyze, animate, refine, render })
    }

    fn get(&self, stage: Stage) -> &str {
        match stage {
            Stage::Analyze => &self.analyze,
            Stage::Animate => &self.animate,
            Stage::Refine => &self.refine,
            Stage::Render => self.render.as_deref().expect("render key computed"),
        }
    }
}

/// Runs one stage after checking that upstream artifacts match the current inputs.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> CliResult<StageOutcome> {
    cfg.validate(stage)?;
    let cams = prepare_cameras(cfg, stage)?;
    let keys = StageKeys::compute(cfg, stage)?;
    let layout = Layout::new(cfg);
    let _lock = OutputLock::acquire(&layout.root)?;
    let idx = Stage::ALL.iter().position(|s| *s == stage).expect("known stage");
    for up in &Stage::ALL[..idx] {
        if stamp_key(&layout.dir(*up)).as_deref() != Some(keys.get(*up)) {
            return Err(CliError::Generic(format!(
                "{} artifacts in {} are missing or stale; run `splatwalk {}` first",
                up.name(),
                layout.dir(*up).display(),
                up.name()
            )));
        }
    }
    execute(cfg, &layout, &keys, stage, cams.as_deref())
}

/// Runs every stage in order, reusing fresh cached stages.
pub fn run_pipeline(cfg: &PipelineConfig) -> CliResult<Vec<StageOutcome>> {
    cfg.validate(Stage::Render)?;
    let cams = prepare_cameras(cfg, Stage::Render)?;
    let keys = StageKeys::compute(cfg, Stage::Render)?;
    let layout = Layout::new(cfg);
    let _lock = OutputLock::acquire(&layout.root)?;
    Stage::ALL
        .iter()
        .map(|s| execute(cfg, &layout, &keys, *s, cams.as_deref()))
        .collect()
}

fn prepare_cameras(cfg: &PipelineConfig, stage: Stage) -> CliResult<Option<Vec<Camera>>> {
    if stage != Stage::Render {
        return Ok(None);
    }
    let path = cfg.cameras.as_ref().expect("validated");
    let cams = load_cameras(path).map_err(|e| CliError::input(path, e))?;
    if cams.is_empty() {
        return Err(CliError::Malformed(format!("{} holds no cameras", path.display())));
    }
    Ok(Some(match cfg.render.resolution {
        Some(res) => cams.iter().map(|c| rescale(c, res)).collect::<CliResult<_>>()?,
        None => cams,
    }))
}

fn rescale(cam: &Camera, res: [u32; 2]) -> CliResult<Camera> {
    let sx = res[0] as f64 / cam.width as f64;
    let sy = res[1] as f64 / cam.height as f64;
    Camera::new(
        [cam.fx * sx, cam.fy * sy],
        [cam.cx * sx, cam.cy * sy],
        res,
        *cam.rotation(),
        cam.translation(),
    )
    .map_err(|e| CliError::Malformed(e.to_string()))
}

fn execute(
    cfg: &PipelineConfig,
    layout: &Layout,
    keys: &StageKeys,
    stage: Stage,
    cams: Option<&[Camera]>,
) -> CliResult<StageOutcome> {
    let dir = layout.dir(stage);
    let key = keys.get(stage);
    let frames = cams.map_or(0, |c| c.len());
    if is_fresh(&dir, key, &layout.outputs(stage, frames)) {
        return Ok(StageOutcome { stage, cached: true, dir });
    }
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    clear_stamp(&dir)?;
    match stage {
        Stage::Analyze => analyze(cfg, layout)?,
        Stage::Animate => animate(cfg, layout)?,
        Stage::Refine => refine_stage(cfg, layout)?,
        Stage::Render => render_stage(cfg, layout, cams.expect("cameras loaded"))?,
    }
    write_stamp(&dir, stage.name(), key)?;
    Ok(StageOutcome { stage, cached: false, dir })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Generic(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

fn load_scene(cfg: &PipelineConfig) -> CliResult<GaussianSet> {
    load_splat_ply(&cfg.scene).map_err(|e| CliError::input(&cfg.scene, e))
}

fn analyze(cfg: &PipelineConfig, layout: &Layout) -> CliResult<()> {
    let s = &cfg.scene_params;
    let set = load_scene(cfg)?;
    let aligned = AlignedScene::build(&set, s.opacity_threshold, None).map_err(|e| CliError::stage("analyze", e))?;
    let map = build_walkmap(&aligned, s.cell, s.clearance, (s.band[0], s.band[1]))
        .map_err(|e| CliError::stage("analyze", e))?;
    let pgm = layout.walkmap_pgm();
    std::fs::write(&pgm, map.to_pgm()).map_err(|e| io_err(&pgm, e))?;
    write_json(&layout.walkmap_meta(), &map.meta())?;
    write_json(&layout.alignment(), &aligned.record())
}

/// Scene state shared by the stages after analysis, all in the aligned frame.
pub struct SceneContext {
    pub world: GaussianSet,
    pub aligned: AlignedScene,
    pub map: WalkMap,
}

impl SceneContext {
    pub fn load(cfg: &PipelineConfig) -> CliResult<Self> {
        let layout = Layout::new(cfg);
        let world = load_scene(cfg)?;
        let kept = cull_by_opacity(&world, cfg.scene_params.opacity_threshold).map_err(|e| CliError::stage("scene", e))?;
        let rec: AlignmentRecord = read_json(&layout.alignment())?;
        let r = rec.rotation;
        let rotation = Rotation3::from_matrix_unchecked(Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ));
        let aligned = AlignedScene::from_rotation(rotation, &kept.centers());
        let meta: WalkMapMeta = read_json(&layout.walkmap_meta())?;
        let pgm = layout.walkmap_pgm();
        let bytes = std::fs::read(&pgm).map_err(|e| io_err(&pgm, e))?;
        let map = WalkMap::from_pgm(&bytes, &meta).map_err(|e| CliError::input(&pgm, e))?;
        Ok(Self { world, aligned, map })
    }

    pub fn to_aligned(&self, world: &[f64; 3]) -> Vector3<f64> {
        self.aligned.rotation() * Vector3::from(*world)
    }

    /// Soft distance to obstacle-band centers, used by the transition collision term.
    pub fn obstacle_field(&self, beta: f64) -> CliResult<Option<DistanceField>> {
        let (lo, hi) = self.map.band();
        let pts: Vec<Vector3<f64>> = self
            .aligned
            .centers()
            .iter()
            .filter(|p| p[2] >= lo && p[2] <= hi)
            .map(|p| Vector3::from(*p))
            .collect();
        if pts.is_empty() {
            return Ok(None);
        }
        DistanceField::new(&pts, beta).map(Some).map_err(|e| CliError::stage("animate", e))
    }
}

pub fn load_body(cfg: &PipelineConfig) -> CliResult<SkinnedBody> {
    match &cfg.body.file {
        Some(p) => SkinnedBody::load(p).map_err(|e| CliError::input(p, e)),
        None => Ok(make_test_body(cfg.body_height())),
    }
}

/// Per-goal record written next to the clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub goal: usize,
    pub action: ActionPreset,
    /// First clip frame of the segment and frames it contributed.
    pub first_frame: usize,
    pub walk_frames: usize,
    pub transition_frames: usize,
    pub path_cost: f64,
    /// Aligned-frame anchor target.
    pub anchor_goal: [f64; 3],
    pub anchor_error: f64,
    /// Largest pose-coordinate gap at each junction opening this segment.
    pub junction_gap: f64,
    pub loss_initial: f64,
    pub loss_final: f64,
    pub start_loss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimateReport {
    pub frames: usize,
    pub fps: f64,
    pub segments: Vec<SegmentReport>,
}

struct ClipBuilder {
    clip: Option<MotionClip>,
    junction_gap: f64,
}

impl ClipBuilder {
    /// Appends `seg`; after the first segment its opening frame repeats the
    /// current last frame and is dropped. Returns the frames contributed.
    fn push(&mut self, seg: &MotionClip) -> CliResult<usize> {
        let gen = |e: splatwalk::Error| CliError::Generic(format!("animate: {e}"));
        match &mut self.clip {
            None => {
                self.clip = Some(MotionClip::new(seg.fps(), seg.joint_names().to_vec(), seg.poses().to_vec()).map_err(gen)?);
                Ok(seg.len())
            }
            Some(clip) => {
                let gap = clip
                    .last()
                    .coords()
                    .iter()
                    .zip(seg.poses()[0].coords())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                self.junction_gap = self.junction_gap.max(gap);
                if seg.len() < 2 {
                    return Ok(0);
                }
                let tail = MotionClip::new(seg.fps(), seg.joint_names().to_vec(), seg.poses()[1..].to_vec()).map_err(gen)?;
                clip.append(&tail).map_err(gen)?;
                Ok(tail.len())
            }
        }
    }

    fn len(&self) -> usize {
        self.clip.as_ref().map_or(0, |c| c.len())
    }

    fn last(&self) -> Option<&Pose> {
        self.clip.as_ref().map(|c| c.last())
    }
}

fn pelvis_xy(body: &SkinnedBody, pose: &Pose) -> CliResult<Vector2<f64>> {
    let kin = pose.kinematics(body.skeleton()).map_err(|e| CliError::Generic(e.to_string()))?;
    let p = kin.joint_position(0).0;
    Ok(Vector2::new(p[0], p[1]))
}

fn anchor_position(body: &SkinnedBody, pose: &Pose, anchor: &str) -> CliResult<Vector3<f64>> {
    let b = body
        .skeleton()
        .index(anchor)
        .ok_or_else(|| CliError::Generic(format!("body has no joint {anchor}")))?;
    let kin = pose.kinematics(body.skeleton()).map_err(|e| CliError::Generic(e.to_string()))?;
    Ok(Vector3::from(kin.joint_position(b).0))
}

struct Animator<'a> {
    cfg: &'a PipelineConfig,
    body: SkinnedBody,
    ctx: SceneContext,
    field: Option<DistanceField>,
    loco: LocomotionParams,
    clip: ClipBuilder,
}

impl Animator<'_> {
    fn transition(&mut self, action: ActionPreset, goal: &Vector3<f64>) -> CliResult<(usize, splatwalk::body::TransitionOutcome, Vector3<f64>)> {
        let m = &self.cfg.motion;
        let gen = |e: splatwalk::Error| CliError::Generic(format!("animate: {e}"));
        let seed = self.clip.last().expect("walk precedes transitions").clone();
        let target = action.anchor_goal(&self.body, &seed, goal).map_err(gen)?;
        let mut prob =
            TransitionProblem::new(&self.body, seed.clone(), target, action.anchor(), m.transition_frames, m.fps).map_err(gen)?;
        prob.weights = m.transition_weights;
        prob.r_body = m.body_clearance;
        let init = hold_clip(&seed, self.body.skeleton().names(), m.transition_frames, m.fps).map_err(gen)?;
        let opts = OptimOptions { max_iters: m.max_iters, ..Default::default() };
        let out = optimize_transition(&prob, self.field.as_ref(), &init, &opts).map_err(gen)?;
        let added = self.clip.push(&out.clip)?;
        Ok((added, out, target))
    }

    fn walk(&mut self, index: usize, from_xy: Vector2<f64>, to_xy: Vector2<f64>) -> CliResult<(usize, f64)> {
        let map = &self.ctx.map;
        let no_walkable = || CliError::EmptyScene("the walk map has no walkable cell".into());
        let from = map.nearest_walkable(&from_xy).ok_or_else(no_walkable)?;
        let to = map.nearest_walkable(&to_xy).ok_or_else(no_walkable)?;
        let path = match astar(map, from, to).map_err(|e| CliError::Generic(format!("animate: {e}")))? {
            PlanOutcome::Found(p) => simplify_path(&p, map),
            PlanOutcome::Unreachable { expanded } => {
                return Err(CliError::Unreachable {
                    index,
                    reason: format!(
                        "no walkable path from ({:.2}, {:.2}) to ({:.2}, {:.2}) in the aligned frame, {expanded} cells searched",
                        from_xy.x, from_xy.y, to_xy.x, to_xy.y
                    ),
                })
            }
        };
        let start_ok = map.sample(&from_xy) == 1;
        let mut tries: Vec<Vec<Vector2<f64>>> = Vec::new();
        if start_ok {
            let mut w = path.waypoints.clone();
            w[0] = from_xy;
            tries.push(w);
            let mut w = vec![from_xy];
            w.extend_from_slice(&path.waypoints);
            tries.push(w);
        } else {
            tries.push(path.waypoints.clone());
        }
        let seed = self.clip.last().cloned();
        let mut last_err = None;
        for wps in tries {
            match follow_waypoints(&self.body, &wps, map, self.cfg.motion.fps, &self.loco, seed.as_ref()) {
                Ok(seg) => return Ok((self.clip.push(&seg)?, path.cost)),
                Err(e) => last_err = Some(e),
            }
        }
        Err(CliError::Generic(format!("animate: goal {index}: {}", last_err.expect("at least one attempt"))))
    }
}

fn animate(cfg: &PipelineConfig, layout: &Layout) -> CliResult<()> {
    let ctx = SceneContext::load(cfg)?;
    let body = load_body(cfg)?;
    for m in CONTACT_MARKERS {
        body.marker(m).map_err(|e| CliError::Malformed(format!("body: {e}")))?;
    }
    let field = ctx.obstacle_field(cfg.scene_params.beta)?;
    let loco = LocomotionParams {
        speed: cfg.motion.speed,
        floor_height: ctx.aligned.floor_height(),
        ..Default::default()
    };
    let start = match &cfg.start {
        Some(p) => ctx.to_aligned(p).xy(),
        None => {
            let c = ctx.aligned.centers();
            let sum = c.iter().fold(Vector2::zeros(), |a, p| a + Vector2::new(p[0], p[1]));
            sum / c.len() as f64
        }
    };
    let mut an = Animator { cfg, body, ctx, field, loco, clip: ClipBuilder { clip: None, junction_gap: 0.0 } };
    let mut segments = Vec::new();
    for (i, goal) in cfg.goals.iter().enumerate() {
        let first_frame = an.clip.len();
        an.clip.junction_gap = 0.0;
        let g = an.ctx.to_aligned(&goal.position);
        let mut walk_frames = 0;
        let cur = match an.clip.last() {
            None => start,
            Some(p) => pelvis_xy(&an.body, p)?,
        };
        if an.clip.last().is_some() && an.ctx.map.sample(&cur) == 0 {
            let cell = an.ctx.map.nearest_walkable(&cur).ok_or_else(|| CliError::EmptyScene("no walkable cell".into()))?;
            let c = an.ctx.map.cell_to_world(cell);
            let (n, _, _) = an.transition(ActionPreset::Walk, &Vector3::new(c.x, c.y, 0.0))?;
            walk_frames += n;
        }
        let cur = match an.clip.last() {
            None => cur,
            Some(p) => pelvis_xy(&an.body, p)?,
        };
        let (n, path_cost) = an.walk(i, cur, g.xy())?;
        walk_frames += n;
        let (transition_frames, out, target) = an.transition(goal.action, &g)?;
        let reached = anchor_position(&an.body, an.clip.last().expect("clip exists"), goal.action.anchor())?;
        segments.push(SegmentReport {
            goal: i,
            action: goal.action,
            first_frame,
            walk_frames,
            transition_frames,
            path_cost,
            anchor_goal: target.into(),
            anchor_error: (reached - target).norm(),
            junction_gap: an.clip.junction_gap,
            loss_initial: out.initial.total,
            loss_final: out.result.total,
            start_loss: out.result.start,
            iterations: out.report.iterations,
        });
    }
    let clip = an.clip.clip.take().expect("at least one goal");
    let th = ContactThresholds { tau_v: cfg.motion.contact_tau_v, tau_a: cfg.motion.contact_tau_a };
    let flags = detect_contacts(&an.body, &clip, &CONTACT_MARKERS, th).map_err(|e| CliError::Generic(format!("animate: {e}")))?;
    let clip = clip.with_contacts(flags).map_err(|e| CliError::Generic(format!("animate: {e}")))?;
    let report = AnimateReport { frames: clip.len(), fps: clip.fps(), segments };
    let text = clip.to_json().map_err(|e| CliError::Generic(e.to_string()))?;
    std::fs::write(layout.clip(), text).map_err(|e| io_err(&layout.clip(), e))?;
    write_json(&layout.animate_report(), &report)
}

/// Contact index sets for every flagged marker of `clip`.
pub fn contact_sets(body: &SkinnedBody, clip: &MotionClip, k: usize) -> CliResult<Vec<ContactSet>> {
    let c = clip.contacts();
    c.names
        .iter()
        .zip(&c.flags)
        .map(|(name, flags)| {
            Ok(ContactSet {
                name: name.clone(),
                indices: lift_contact_indices(body, name, k).map_err(|e| CliError::Malformed(format!("body: {e}")))?,
                flags: flags.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub frames: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub termination: String,
    pub penetration_before: usize,
    pub penetration_after: usize,
}

pub fn posed_frames(body: &SkinnedBody, clip: &MotionClip) -> CliResult<Vec<GaussianSet>> {
    clip.poses()
        .iter()
        .map(|p| pose_body(body, p).map_err(|e| CliError::Generic(e.to_string())))
        .collect()
}

fn load_clip(layout: &Layout) -> CliResult<MotionClip> {
    MotionClip::load(layout.clip()).map_err(|e| CliError::input(&layout.clip(), e))
}

fn refine_stage(cfg: &PipelineConfig, layout: &Layout) -> CliResult<()> {
    let ctx = SceneContext::load(cfg)?;
    let body = load_body(cfg)?;
    let clip = load_clip(layout)?;
    let field = ctx.aligned.distance_field(cfg.scene_params.beta).map_err(|e| CliError::stage("refine", e))?;
    let frames = posed_frames(&body, &clip)?;
    let rc = &cfg.refine;
    let prob = RefineProblem {
        frames: &frames,
        contacts: contact_sets(&body, &clip, rc.contact_k)?,
        field: &field,
        params: RefineParams {
            weights: rc.weights,
            radius: rc.radius,
            max_translation: rc.max_translation,
            mode: rc.mode,
            options: OptimOptions { max_iters: rc.max_iters, ..Default::default() },
        },
        skin: Some(body.weights()),
    };
    let out = refine(&prob).map_err(|e| CliError::Generic(format!("refine: {e}")))?;
    let mask = contact_mask(&prob.contacts, frames.len(), body.gaussians().len(), Some(body.weights()));
    let before: usize = penetration_report(&frames, &field, rc.radius, Some(&mask)).iter().sum();
    let after: usize = penetration_report(&out.frames, &field, rc.radius, Some(&mask)).iter().sum();
    write_json(&layout.translations(), &out.translations)?;
    write_json(
        &layout.refine_report(),
        &RefineReport {
            frames: frames.len(),
            initial_objective: out.initial_objective,
            final_objective: out.final_objective,
            iterations: out.report.iterations,
            termination: format!("{:?}", out.report.termination),
            penetration_before: before,
            penetration_after: after,
        },
    )
}

/// Clip frame shown by camera `i` of `cameras`.
pub fn camera_frame(i: usize, cameras: usize, frames: usize) -> usize {
    i * (frames - 1) / (cameras.max(2) - 1)
}

/// Refined body at every camera's frame, in the world frame.
pub fn refined_world_bodies(cfg: &PipelineConfig, cameras: usize) -> CliResult<Vec<GaussianSet>> {
    let layout = Layout::new(cfg);
    let ctx = SceneContext::load(cfg)?;
    let body = load_body(cfg)?;
    let clip = load_clip(&layout)?;
    let records: Vec<TranslationRecord> = read_json(&layout.translations())?;
    let contacts = contact_sets(&body, &clip, cfg.refine.contact_k)?;
    let back = ctx.aligned.rotation().inverse();
    (0..cameras)
        .map(|i| {
            let t = camera_frame(i, cameras, clip.len());
            let posed = pose_body(&body, &clip.poses()[t]).map_err(|e| CliError::Generic(e.to_string()))?;
            let off = translation_offsets(&contacts, &records, t, posed.len(), Some(body.weights()))
                .map_err(|e| CliError::input(&layout.translations(), e))?;
            Ok(splatwalk::refine::apply_offsets(&posed, &off).rotated(&back))
        })
        .collect()
}

pub fn render_config(cfg: &PipelineConfig) -> RenderConfig {
    RenderConfig { background: cfg.render.background, ..Default::default() }
}

fn render_stage(cfg: &PipelineConfig, layout: &Layout, cams: &[Camera]) -> CliResult<()> {
    let scene = load_scene(cfg)?;
    let bodies = refined_world_bodies(cfg, cams.len())?;
    let images = render_sequence(&scene, &bodies, cams, &render_config(cfg)).map_err(|e| CliError::Generic(format!("render: {e}")))?;
    let dir = layout.dir(Stage::Render);
    for entry in std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
        let p = entry.map_err(|e| io_err(&dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && name.ends_with(".png") {
            std::fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    for (i, img) in images.iter().enumerate() {
        img.write_png(layout.frame(i)).map_err(|e| CliError::Generic(format!("render: {e}")))?;
    }
    Ok(())
}
