use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use splatwalk::body::ActionPreset;
use splatwalk::refine::TranslationMode;

use crate::config::{Goal, PipelineConfig, Stage};
use crate::demo::{write_demo, DemoOptions};
use crate::error::{CliError, CliResult};
use crate::stages::{run_pipeline, run_stage, StageOutcome};

pub const THREADS_ENV: &str = "SPLATWALK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "splatwalk", version, about = "Place, animate and render splat humans in splat scenes")]
pub struct Cli {
    /// Worker threads; also read from SPLATWALK_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cull, align and build the walk map.
    Analyze(ConfigArgs),
    /// Plan, walk and run the goal transitions.
    Animate(ConfigArgs),
    /// Optimize contact translations for the animated clip.
    Refine(ConfigArgs),
    /// Render one PNG per camera.
    Render(ConfigArgs),
    /// Run every stage, reusing cached ones.
    Pipeline(ConfigArgs),
    /// Write the bundled synthetic scene, cameras and config.
    Demo {
        dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        cameras: usize,
        #[arg(long, value_parser = parse_resolution, default_value = "160x120")]
        resolution: [u32; 2],
    },
}

#[derive(Debug, Args, Default, Clone)]
pub struct ConfigArgs {
    /// JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long, conflicts_with = "body_file")]
    pub body_height: Option<f64>,
    #[arg(long)]
    pub body_file: Option<PathBuf>,
    /// World-frame start, `x,y,z`.
    #[arg(long, value_parser = parse_vec3)]
    pub start: Option<[f64; 3]>,
    /// `action:x,y,z` in the world frame; repeat for several goals. Replaces configured goals.
    #[arg(long = "goal", value_parser = parse_goal)]
    pub goals: Vec<Goal>,
    #[arg(long)]
    pub opacity_threshold: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub cell: Option<f64>,
    #[arg(long)]
    pub clearance: Option<f64>,
    /// Obstacle height band above the floor, `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    pub band: Option<[f64; 2]>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub transition_frames: Option<usize>,
    #[arg(long)]
    pub lambda_stop: Option<f64>,
    #[arg(long)]
    pub lambda_start: Option<f64>,
    #[arg(long)]
    pub lambda_collision: Option<f64>,
    #[arg(long)]
    pub lambda_smooth: Option<f64>,
    #[arg(long)]
    pub body_clearance: Option<f64>,
    #[arg(long)]
    pub lambda_snap: Option<f64>,
    #[arg(long)]
    pub lambda_contact: Option<f64>,
    #[arg(long)]
    pub lambda_reg: Option<f64>,
    #[arg(long)]
    pub lambda_temporal: Option<f64>,
    /// Separation radius of the refinement.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub max_translation: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    pub translation_mode: Option<TranslationMode>,
    #[arg(long, value_parser = parse_resolution)]
    pub resolution: Option<[u32; 2]>,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated numbers, got {s:?}"))
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats::<2>(s)
}

fn parse_goal(s: &str) -> Result<Goal, String> {
    let (action, pos) = s.split_once(':').ok_or_else(|| format!("expected action:x,y,z, got {s:?}"))?;
    Ok(Goal {
        action: ActionPreset::parse(action).map_err(|e| e.to_string())?,
        position: parse_vec3(pos)?,
    })
}

fn parse_mode(s: &str) -> Result<TranslationMode, String> {
    match s {
        "shared" => Ok(TranslationMode::Shared),
        "per-gaussian" => Ok(TranslationMode::PerGaussian),
        _ => Err(format!("expected shared or per-gaussian, got {s:?}")),
    }
}

fn parse_resolution(s: &str) -> Result<[u32; 2], String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    Ok([
        w.parse().map_err(|e| format!("{w:?}: {e}"))?,
        h.parse().map_err(|e| format!("{h:?}: {e}"))?,
    ])
}

impl ConfigArgs {
    /// Config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => {
                let (Some(scene), Some(output)) = (&self.scene, &self.output) else {
                    return Err(CliError::Malformed("without --config, --scene and --output are required".into()));
                };
                PipelineConfig::new(scene, output)
            }
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(self.scene => scene);
        set!(self.output => output);
        if let Some(p) = &self.cameras {
            cfg.cameras = Some(p.clone());
        }
        if let Some(h) = self.body_height {
            cfg.body.height = Some(h);
            cfg.body.file = None;
        }
        if let Some(p) = &self.body_file {
            cfg.body.file = Some(p.clone());
            cfg.body.height = None;
        }
        if let Some(s) = self.start {
            cfg.start = Some(s);
        }
        if !self.goals.is_empty() {
            cfg.goals = self.goals.clone();
        }
        set!(self.opacity_threshold => scene_params.opacity_threshold);
        set!(self.beta => scene_params.beta);
        set!(self.cell => scene_params.cell);
        set!(self.clearance => scene_params.clearance);
        set!(self.band => scene_params.band);
        set!(self.fps => motion.fps);
        set!(self.speed => motion.speed);
        set!(self.transition_frames => motion.transition_frames);
        set!(self.lambda_stop => motion.transition_weights.stop);
        set!(self.lambda_start => motion.transition_weights.start);
        set!(self.lambda_collision => motion.transition_weights.collision);
        set!(self.lambda_smooth => motion.transition_weights.smooth);
        set!(self.body_clearance => motion.body_clearance);
        set!(self.lambda_snap => refine.weights.snap);
        set!(self.lambda_contact => refine.weights.contact);
        set!(self.lambda_reg => refine.weights.reg);
        set!(self.lambda_temporal => refine.weights.temporal);
        set!(self.separation => refine.radius);
        set!(self.max_translation => refine.max_translation);
        set!(self.translation_mode => refine.mode);
        if let Some(r) = self.resolution {
            cfg.render.resolution = Some(r);
        }
        Ok(cfg)
    }
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Malformed(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Malformed("thread count must be positive".into()));
        }
        // a pool built earlier in the same process wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn report(outcomes: &[StageOutcome]) {
    for o in outcomes {
        let state = if o.cached { "cached" } else { "done" };
        println!("{:<8} {state:<6} {}", o.stage.name(), o.dir.display());
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    let single = |a: &ConfigArgs, s: Stage| -> CliResult<()> {
        report(&[run_stage(&a.resolve()?, s)?]);
        Ok(())
    };
    match &cli.command {
        Command::Analyze(a) => single(a, Stage::Analyze),
        Command::Animate(a) => single(a, Stage::Animate),
        Command::Refine(a) => single(a, Stage::Refine),
        Command::Render(a) => single(a, Stage::Render),
        Command::Pipeline(a) => {
            report(&run_pipeline(&a.resolve()?)?);
            Ok(())
        }
        Command::Demo { dir, cameras, resolution } => {
            let p = write_demo(dir, &DemoOptions { cameras: *cameras, resolution: *resolution })?;
            println!("wrote {}", p.display());
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_flags_parse() {
        let g = parse_goal("grab:1,2.5,-0.5").unwrap();
        assert_eq!(g.action, ActionPreset::Grab);
        assert_eq!(g.position, [1.0, 2.5, -0.5]);
        assert!(parse_goal("dance:1,2,3").is_err());
        assert!(parse_goal("walk:1,2").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "splatwalk", "animate", "--scene", "s.ply", "--output", "o", "--beta", "20", "--goal", "walk:1,0,0",
            "--translation-mode", "per-gaussian", "--band", "0.2,1.5",
        ])
        .unwrap();
        let Command::Animate(a) = cli.command else { panic!() };
        let cfg = a.resolve().unwrap();
        assert_eq!(cfg.scene_params.beta, 20.0);
        assert_eq!(cfg.scene_params.band, [0.2, 1.5]);
        assert_eq!(cfg.goals.len(), 1);
        assert_eq!(cfg.refine.mode, TranslationMode::PerGaussian);
    }

    #[test]
    fn usage_errors_exit_4() {
        assert_eq!(run(["splatwalk", "analyze", "--beta", "abc"]), 4);
        assert_eq!(run(["splatwalk", "analyze"]), 4);
    }

    #[test]
    fn resolution_parses() {
        assert_eq!(parse_resolution("64x48").unwrap(), [64, 48]);
        assert!(parse_resolution("64").is_err());
    }
}
