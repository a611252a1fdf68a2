//! Command-line pipeline that analyzes a splat scene, animates a skinned
//! splat body through it, refines foot contact and renders the result.
//!
//! Stages write under the configured output directory:
//! `analyze/` (walk map PGM, its sidecar, alignment), `animate/clip.json`,
//! `refine/translations.json` and `frames/frame_NNNN.png`. Each stage is keyed
//! on a content hash of its inputs and skipped when nothing changed.

pub mod args;
pub mod cache;
pub mod config;
pub mod demo;
pub mod error;
pub mod stages;

pub use args::run;
pub use config::{PipelineConfig, Stage};
pub use error::{CliError, CliResult};
pub use stages::{run_pipeline, run_stage, Layout, StageOutcome};
