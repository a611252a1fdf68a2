//! Skinned Gaussian-splat humans inside Gaussian-splat scenes.
//!
//! The crate is organised along the pipeline:
//!
//! - [`gauss`]: Gaussian primitives and splat PLY I/O.
//! - [`render`]: CPU tile rasterizer and image writers.
//! - [`field`]: opacity culling, up-axis alignment and the soft distance field.
//! - [`nav`]: walkability maps, A* planning and egocentric occupancy.
//! - [`body`]: skinned bodies, locomotion, contact detection and transitions.
//! - [`refine`]: contact-aware translation refinement of posed Gaussians.

pub mod body;
pub mod dual;
pub mod error;
pub mod field;
pub mod gauss;
pub mod nav;
pub mod optim;
pub mod refine;
pub mod render;
pub mod spatial;
pub mod synthetic;

pub use error::{Error, Result};
