use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splatwalk::body::{ActionPreset, TransitionWeights, DEFAULT_CONTACT_K, DEFAULT_R_BODY, DEFAULT_TAU_A, DEFAULT_TAU_V};
use splatwalk::field::{DEFAULT_BETA, DEFAULT_OPACITY_CULL};
use splatwalk::nav::{DEFAULT_BAND, DEFAULT_CELL, DEFAULT_CLEARANCE};
use splatwalk::refine::{RefineWeights, TranslationMode, DEFAULT_MAX_TRANSLATION, DEFAULT_SEPARATION};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Analyze,
    Animate,
    Refine,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Analyze, Stage::Animate, Stage::Refine, Stage::Render];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::Animate => "animate",
            Stage::Refine => "refine",
            Stage::Render => "render",
        }
    }
}

/// Procedural test body of the given height, or a body file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

pub const DEFAULT_BODY_HEIGHT: f64 = 1.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub action: ActionPreset,
    /// World-frame target point.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub opacity_threshold: f64,
    pub beta: f64,
    pub cell: f64,
    pub clearance: f64,
    /// Obstacle height band above the floor.
    pub band: [f64; 2],
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            opacity_threshold: DEFAULT_OPACITY_CULL,
            beta: DEFAULT_BETA,
            cell: DEFAULT_CELL,
            clearance: DEFAULT_CLEARANCE,
            band: [DEFAULT_BAND.0, DEFAULT_BAND.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub fps: f64,
    /// Walking speed in m/s.
    pub speed: f64,
    pub transition_frames: usize,
    pub transition_weights: TransitionWeights,
    pub body_clearance: f64,
    pub max_iters: usize,
    pub contact_tau_v: f64,
    pub contact_tau_a: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            fps: 30.0,
            speed: 1.2,
            transition_frames: 30,
            transition_weights: TransitionWeights::default(),
            body_clearance: DEFAULT_R_BODY,
            max_iters: 300,
            contact_tau_v: DEFAULT_TAU_V,
            contact_tau_a: DEFAULT_TAU_A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub weights: RefineWeights,
    pub radius: f64,
    pub max_translation: f64,
    pub mode: TranslationMode,
    /// Body Gaussians lifted per contact marker.
    pub contact_k: usize,
    pub max_iters: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            weights: RefineWeights::default(),
            radius: DEFAULT_SEPARATION,
            max_translation: DEFAULT_MAX_TRANSLATION,
            mode: TranslationMode::Shared,
            contact_k: DEFAULT_CONTACT_K,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    /// Rescales every camera to this `[width, height]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[u32; 2]>,
    pub background: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: PathBuf,
    #[serde(default)]
    pub body: BodySpec,
    /// World-frame start position; defaults to the walkable cell nearest the scene centroid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 3]>,
    #[serde(default)]
    pub goals: Vec<Goal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub scene_params: SceneParams,
    #[serde(default)]
    pub motion: MotionParams,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub render: RenderParams,
}

impl PipelineConfig {
    pub fn new(scene: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            scene: scene.into(),
            body: BodySpec::default(),
            start: None,
            goals: Vec::new(),
            cameras: None,
            output: output.into(),
            scene_params: SceneParams::default(),
            motion: MotionParams::default(),
            refine: RefineConfig::default(),
            render: RenderParams::default(),
        }
    }

    /// Reads a JSON config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Malformed(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Malformed(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.scene);
        fix(&mut self.output);
        if let Some(p) = self.cameras.as_mut() {
            fix(p);
        }
        if let Some(p) = self.body.file.as_mut() {
            fix(p);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn body_height(&self) -> f64 {
        self.body.height.unwrap_or(DEFAULT_BODY_HEIGHT)
    }

    /// Checks everything `stage` and its upstream stages read, before any output is touched.
    pub fn validate(&self, stage: Stage) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Malformed(m));
        require_file("scene", &self.scene)?;
        let s = &self.scene_params;
        if !(0.0..1.0).contains(&s.opacity_threshold) {
            return bad(format!("opacity_threshold must lie in [0, 1), got {}", s.opacity_threshold));
        }
        if !(s.beta > 0.0 && s.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", s.beta));
        }
        if !(s.cell > 0.0 && s.cell <= 1.0) {
            return bad(format!("cell must lie in (0, 1] m, got {}", s.cell));
        }
        if !(s.clearance >= 0.0 && s.clearance.is_finite()) {
            return bad(format!("clearance must be non-negative, got {}", s.clearance));
        }
        if !(s.band[0] < s.band[1]) || !s.band.iter().all(|v| v.is_finite()) {
            return bad(format!("band must be an increasing pair, got {:?}", s.band));
        }
        if stage == Stage::Analyze {
            return Ok(());
        }

        match (&self.body.height, &self.body.file) {
            (Some(_), Some(_)) => return bad("body takes either a height or a file, not both".into()),
            (_, Some(f)) => require_file("body", f)?,
            (Some(h), None) if !(*h > 0.3 && *h < 3.0) => return bad(format!("body height must lie in (0.3, 3) m, got {h}")),
            _ => {}
        }
        if self.goals.is_empty() {
            return bad("at least one goal is required".into());
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !g.position.iter().all(|v| v.is_finite()) {
                return bad(format!("goal {i} has a non-finite position"));
            }
        }
        if let Some(p) = &self.start {
            if !p.iter().all(|v| v.is_finite()) {
                return bad("start position is not finite".into());
            }
        }
        let m = &self.motion;
        if !(m.fps > 0.0 && m.fps <= 240.0) {
            return bad(format!("fps must lie in (0, 240], got {}", m.fps));
        }
        if !(m.speed > 0.0 && m.speed <= 5.0) {
            return bad(format!("speed must lie in (0, 5] m/s, got {}", m.speed));
        }
        if !(2..=1000).contains(&m.transition_frames) {
            return bad(format!("transition_frames must lie in [2, 1000], got {}", m.transition_frames));
        }
        let w = &m.transition_weights;
        if ![w.stop, w.start, w.collision, w.smooth, m.body_clearance].iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return bad("transition weights and body clearance must be non-negative".into());
        }
        if m.max_iters == 0 {
            return bad("motion.max_iters must be positive".into());
        }
        if !(m.contact_tau_v > 0.0 && m.contact_tau_a > 0.0) {
            return bad("contact thresholds must be positive".into());
        }
        if stage == Stage::Animate {
            return Ok(());
        }

        let r = &self.refine;
        let w = &r.weights;
        if ![w.snap, w.contact, w.reg, w.temporal].iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return bad("refinement weights must be non-negative".into());
        }
        if !(r.radius > 0.0 && r.radius.is_finite()) || !(r.max_translation > 0.0 && r.max_translation.is_finite()) {
            return bad("separation radius and max translation must be positive".into());
        }
        if r.contact_k == 0 || r.max_iters == 0 {
            return bad("refine.contact_k and refine.max_iters must be positive".into());
        }
        if stage == Stage::Refine {
            return Ok(());
        }

        match &self.cameras {
            None => return bad("rendering needs a camera trajectory file".into()),
            Some(p) => require_file("cameras", p)?,
        }
        if let Some([w, h]) = self.render.resolution {
            if w == 0 || h == 0 || w > 8192 || h > 8192 {
                return bad(format!("resolution must lie in [1, 8192]^2, got {w}x{h}"));
            }
        }
        if !self.render.background.iter().all(|v| (0.0..=1.0).contains(v)) {
            return bad("background must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn require_file(what: &str, p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Malformed(format!("{what} file {} does not exist", p.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"scene": "s.ply", "output": "out"}"#).unwrap();
        assert_eq!(cfg.scene_params, SceneParams::default());
        assert_eq!(cfg.refine.mode, TranslationMode::Shared);
        assert_eq!(cfg.body_height(), DEFAULT_BODY_HEIGHT);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<PipelineConfig, _> = serde_json::from_str(r#"{"scene": "s", "output": "o", "bogus": 1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = PipelineConfig::new("a.ply", "out");
        cfg.goals.push(Goal { action: ActionPreset::Grab, position: [1.0, 2.0, 0.5] });
        cfg.cameras = Some("c.json".into());
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut cfg = PipelineConfig::new("a.ply", "out");
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.scene, Path::new("/data/run/a.ply"));
        assert_eq!(cfg.output, Path::new("/data/run/out"));
    }

    #[test]
    fn missing_scene_is_malformed() {
        let cfg = PipelineConfig::new("/nonexistent/scene.ply", "out");
        assert!(matches!(cfg.validate(Stage::Analyze), Err(CliError::Malformed(_))));
    }
}
