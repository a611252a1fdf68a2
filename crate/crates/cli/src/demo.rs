use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use splatwalk::body::ActionPreset;
use splatwalk::gauss::save_splat_ply;
use splatwalk::render::save_cameras;
use splatwalk::synthetic::{floor_box_scene, orbit_cameras};

use crate::config::{Goal, PipelineConfig};
use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub cameras: usize,
    pub resolution: [u32; 2],
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self { cameras: 4, resolution: [160, 120] }
    }
}

/// Writes the bundled floor-and-box scene, an orbit trajectory and a config
/// into `dir`, returning the config path.
pub fn write_demo(dir: &Path, opts: &DemoOptions) -> CliResult<PathBuf> {
    if opts.cameras == 0 || opts.resolution.contains(&0) {
        return Err(CliError::Malformed("demo needs at least one camera and a non-empty resolution".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let gen = |e: splatwalk::Error| CliError::Generic(format!("demo: {e}"));
    let scene = floor_box_scene();
    save_splat_ply(&scene.gaussians, dir.join("scene.ply")).map_err(gen)?;
    let focal = 0.75 * opts.resolution[0] as f64;
    let cams = orbit_cameras(opts.cameras, Vector3::new(0.0, 0.3, 0.6), 3.6, 1.8, focal, opts.resolution).map_err(gen)?;
    save_cameras(&cams, dir.join("cameras.json")).map_err(gen)?;

    let mut cfg = PipelineConfig::new("scene.ply", "out");
    cfg.cameras = Some("cameras.json".into());
    cfg.start = Some([-1.5, -1.0, 0.0]);
    cfg.goals = vec![
        Goal { action: ActionPreset::Walk, position: [-0.3, 1.3, 0.0] },
        Goal { action: ActionPreset::Grab, position: [0.75, 0.9, 0.9] },
    ];
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}
