//! Vertical-kinematics contact detection.

use nalgebra::Vector3;

use super::{ContactFlags, MotionClip, SkinnedBody};
use crate::error::{Error, Result};

/// Meters per frame.
pub const DEFAULT_TAU_V: f64 = 0.01;
/// Meters per frame squared.
pub const DEFAULT_TAU_A: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactThresholds {
    pub tau_v: f64,
    pub tau_a: f64,
}

impl Default for ContactThresholds {
    fn default() -> Self {
        Self {
            tau_v: DEFAULT_TAU_V,
            tau_a: DEFAULT_TAU_A,
        }
    }
}

/// `|v_t| < tau_v && a_t < tau_a` on the `z` coordinate with backward
/// differences; frames 0 and 1 copy frame 2.
pub fn contact_flags(track: &[Vector3<f64>], th: ContactThresholds) -> Result<Vec<bool>> {
    if track.len() < 3 {
        return Err(Error::arg(format!(
            "contact detection needs at least 3 frames, got {}",
            track.len()
        )));
    }
    let mut flags = vec![false; track.len()];
    for t in 2..track.len() {
        let v = track[t].z - track[t - 1].z;
        let v_prev = track[t - 1].z - track[t - 2].z;
        let a = v - v_prev;
        flags[t] = v.abs() < th.tau_v && a < th.tau_a;
    }
    flags[0] = flags[2];
    flags[1] = flags[2];
    Ok(flags)
}

/// Flags for each named joint or marker of `clip`.
pub fn detect_contacts(
    body: &SkinnedBody,
    clip: &MotionClip,
    names: &[&str],
    th: ContactThresholds,
) -> Result<ContactFlags> {
    let tracks = clip.tracks(body, names)?;
    let flags = tracks
        .iter()
        .map(|t| contact_flags(t, th))
        .collect::<Result<Vec<_>>>()?;
    Ok(ContactFlags {
        names: names.iter().map(|n| n.to_string()).collect(),
        flags,
    })
}
