//! Contact-aware translation refinement of posed body Gaussians.
//!
//! Contact Gaussians receive small per-frame translations that snap them onto
//! nearby scene surfaces while a contact is flagged and push them out to a
//! separation radius otherwise. Everything happens in the aligned scene frame.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::WeightRow;
use crate::error::{Error, Result};
use crate::field::DistanceField;
use crate::gauss::GaussianSet;
use crate::optim::{minimize, Objective, OptimOptions, OptimReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineWeights {
    /// Pull toward the nearest scene center.
    pub snap: f64,
    /// Contact / separation term.
    pub contact: f64,
    /// Translation magnitude.
    pub reg: f64,
    /// Frame-to-frame translation change.
    pub temporal: f64,
}

impl Default for RefineWeights {
    fn default() -> Self {
        Self {
            snap: 1.0,
            contact: 100.0,
            reg: 1.0,
            temporal: 50.0,
        }
    }
}

pub const DEFAULT_SEPARATION: f64 = 0.05;
pub const DEFAULT_MAX_TRANSLATION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranslationMode {
    /// One translation per (marker, frame) shared by the marker's Gaussians.
    Shared,
    /// One translation per (Gaussian, frame).
    PerGaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineParams {
    pub weights: RefineWeights,
    /// Separation radius `r`.
    pub radius: f64,
    pub max_translation: f64,
    pub mode: TranslationMode,
    pub options: OptimOptions,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            weights: RefineWeights::default(),
            radius: DEFAULT_SEPARATION,
            max_translation: DEFAULT_MAX_TRANSLATION,
            mode: TranslationMode::Shared,
            options: OptimOptions::default(),
        }
    }
}

/// Gaussians lifted from one contact marker together with its per-frame flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    pub name: String,
    pub indices: Vec<usize>,
    pub flags: Vec<bool>,
}

pub struct RefineProblem<'a> {
    pub frames: &'a [GaussianSet],
    pub contacts: Vec<ContactSet>,
    pub field: &'a DistanceField,
    pub params: RefineParams,
    /// Skinning rows of the body; when present, Gaussians outside every
    /// contact set follow the translations in proportion to weight similarity.
    pub skin: Option<&'a [WeightRow]>,
}

impl RefineProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::arg("refinement needs at least one frame"));
        }
        let n = self.frames[0].len();
        if self.frames.iter().any(|f| f.len() != n) {
            return Err(Error::arg("frames differ in Gaussian count"));
        }
        if self.contacts.is_empty() || self.contacts.iter().any(|c| c.indices.is_empty()) {
            return Err(Error::arg("contact index sets must be non-empty"));
        }
        for c in &self.contacts {
            if c.flags.len() != self.frames.len() {
                return Err(Error::arg(format!(
                    "marker {} has {} flags for {} frames",
                    c.name,
                    c.flags.len(),
                    self.frames.len()
                )));
            }
            if c.indices.iter().any(|&k| k >= n) {
                return Err(Error::arg(format!("marker {} indexes past the body", c.name)));
            }
        }
        let w = &self.params.weights;
        if [w.snap, w.contact, w.reg, w.temporal].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::arg("refinement weights must be non-negative"));
        }
        if !(self.params.radius > 0.0) || !(self.params.max_translation > 0.0) {
            return Err(Error::arg("separation radius and translation bound must be positive"));
        }
        if let Some(skin) = self.skin {
            if skin.len() != n {
                return Err(Error::arg("skin rows do not match the body"));
            }
        }
        Ok(())
    }
}

/// `snap |y - mu|^2 + contact psi(y, delta) + reg |T|^2` with `y = x + T` and
/// `mu` the exact nearest scene center of `y`.
pub fn refine_frame_term(
    x: &Vector3<f64>,
    delta: bool,
    weights: &RefineWeights,
    radius: f64,
    field: &DistanceField,
    t: &Vector3<f64>,
) -> f64 {
    term_and_grad(x, delta, weights, radius, field, t).0
}

fn term_and_grad(
    x: &Vector3<f64>,
    delta: bool,
    w: &RefineWeights,
    radius: f64,
    field: &DistanceField,
    t: &Vector3<f64>,
) -> (f64, Vector3<f64>) {
    let y = x + t;
    let (_, mu) = field.nearest(&y);
    let (d, gd) = field.eval(&y);
    let (psi, dpsi) = if delta {
        (d * d, gd * (2.0 * d))
    } else {
        let h = (radius - d).max(0.0);
        (h * h, gd * (-2.0 * h))
    };
    let value = w.snap * (y - mu).norm_squared() + w.contact * psi + w.reg * t.norm_squared();
    let grad = (y - mu) * (2.0 * w.snap) + dpsi * w.contact + t * (2.0 * w.reg);
    (value, grad)
}

/// Histogram intersection of two weight rows.
fn similarity(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    a.iter()
        .map(|&(j, wa)| b.iter().filter(|e| e.0 == j).map(|e| wa.min(e.1)).sum::<f64>())
        .sum()
}

fn mean_row(rows: &[&WeightRow]) -> WeightRow {
    let mut acc: Vec<(usize, f64)> = Vec::new();
    for row in rows {
        for &(j, w) in row.iter() {
            match acc.iter_mut().find(|e| e.0 == j) {
                Some(e) => e.1 += w,
                None => acc.push((j, w)),
            }
        }
    }
    let n = rows.len() as f64;
    acc.iter().map(|&(j, w)| (j, w / n)).collect()
}

struct Layout {
    frames: usize,
    /// Offset of each contact set's block and how many translation tracks it owns.
    blocks: Vec<(usize, usize)>,
    len: usize,
}

impl Layout {
    fn new(prob: &RefineProblem) -> Self {
        let frames = prob.frames.len();
        let mut blocks = Vec::new();
        let mut off = 0;
        for c in &prob.contacts {
            let tracks = match prob.params.mode {
                TranslationMode::Shared => 1,
                TranslationMode::PerGaussian => c.indices.len(),
            };
            blocks.push((off, tracks));
            off += 3 * tracks * frames;
        }
        Self { frames, blocks, len: off }
    }

    /// Start of the 3-vector for contact `c`, member `m`, frame `t`.
    fn at(&self, c: usize, m: usize, t: usize) -> usize {
        let (off, tracks) = self.blocks[c];
        let track = if tracks == 1 { 0 } else { m };
        off + 3 * (track * self.frames + t)
    }
}

fn vec3(x: &[f64], i: usize) -> Vector3<f64> {
    Vector3::new(x[i], x[i + 1], x[i + 2])
}

struct Objectives<'p, 'a> {
    prob: &'p RefineProblem<'a>,
    layout: Layout,
}

impl Objectives<'_, '_> {
    /// Per-frame data terms and their gradient entries, frames in parallel.
    fn data_terms(&self, x: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
        let prob = self.prob;
        let w = &prob.params.weights;
        let per_frame: Vec<(f64, Vec<(usize, Vector3<f64>)>)> = (0..self.layout.frames)
            .into_par_iter()
            .map(|t| {
                let frame = prob.frames[t].as_slice();
                let mut value = 0.0;
                let mut grads = Vec::new();
                for (c, set) in prob.contacts.iter().enumerate() {
                    let delta = set.flags[t];
                    for (m, &k) in set.indices.iter().enumerate() {
                        let i = self.layout.at(c, m, t);
                        let (v, g) =
                            term_and_grad(&frame[k].center(), delta, w, prob.params.radius, prob.field, &vec3(x, i));
                        value += v;
                        if with_grad {
                            grads.push((i, g));
                        }
                    }
                }
                (value, grads)
            })
            .collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; if with_grad { x.len() } else { 0 }];
        for (v, gs) in per_frame {
            total += v;
            for (i, g) in gs {
                grad[i] += g.x;
                grad[i + 1] += g.y;
                grad[i + 2] += g.z;
            }
        }
        (total, grad)
    }

    /// Temporal term, counted once per Gaussian in the set.
    fn temporal(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let lt = self.prob.params.weights.temporal;
        let mut value = 0.0;
        let mut grad = grad;
        for (c, set) in self.prob.contacts.iter().enumerate() {
            let (_, tracks) = self.layout.blocks[c];
            let mult = if tracks == 1 { set.indices.len() as f64 } else { 1.0 };
            for m in 0..tracks {
                for t in 1..self.layout.frames {
                    let (i, j) = (self.layout.at(c, m, t), self.layout.at(c, m, t - 1));
                    let d = vec3(x, i) - vec3(x, j);
                    value += lt * mult * d.norm_squared();
                    if let Some(g) = grad.as_deref_mut() {
                        for a in 0..3 {
                            g[i + a] += 2.0 * lt * mult * d[a];
                            g[j + a] -= 2.0 * lt * mult * d[a];
                        }
                    }
                }
            }
        }
        value
    }
}

impl Objective for Objectives<'_, '_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.data_terms(x, false).0 + self.temporal(x, None)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (_, mut g) = self.data_terms(x, true);
        self.temporal(x, Some(&mut g));
        g
    }

    fn project(&self, x: &mut [f64]) {
        let cap = self.prob.params.max_translation;
        for v in x.chunks_exact_mut(3) {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > cap {
                let s = cap / n;
                v.iter_mut().for_each(|c| *c *= s);
            }
        }
    }
}

/// Optimized translation of one marker (or one Gaussian) at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub marker: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gaussian: Option<usize>,
    pub frame: usize,
    pub t: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub translations: Vec<TranslationRecord>,
    /// `translations_per_gaussian[t][k]`, the offset applied to every body Gaussian.
    pub offsets: Vec<Vec<Vector3<f64>>>,
    pub frames: Vec<GaussianSet>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub report: OptimReport,
}

/// Jointly optimizes the contact translations over all frames, starting from zero.
pub fn refine(prob: &RefineProblem) -> Result<RefineOutcome> {
    prob.validate()?;
    for set in &prob.contacts {
        for (t, frame) in prob.frames.iter().enumerate() {
            for &k in &set.indices {
                let (d, g) = prob.field.eval(&frame.as_slice()[k].center());
                if !d.is_finite() || !g.iter().all(|v| v.is_finite()) {
                    return Err(Error::Data {
                        index: k,
                        message: format!("distance field is not finite at frame {t}"),
                    });
                }
            }
        }
    }
    let obj = Objectives {
        prob,
        layout: Layout::new(prob),
    };
    let x0 = vec![0.0; obj.layout.len];
    let initial_objective = obj.value(&x0);
    let report = minimize(&obj, x0, &prob.params.options);
    let x = &report.x;

    let n = prob.frames[0].len();
    let mut records = Vec::new();
    for (c, set) in prob.contacts.iter().enumerate() {
        let (_, tracks) = obj.layout.blocks[c];
        for m in 0..tracks {
            for t in 0..prob.frames.len() {
                records.push(TranslationRecord {
                    marker: set.name.clone(),
                    gaussian: (prob.params.mode == TranslationMode::PerGaussian).then(|| set.indices[m]),
                    frame: t,
                    t: vec3(x, obj.layout.at(c, m, t)).into(),
                });
            }
        }
    }
    let offsets = (0..prob.frames.len())
        .map(|t| translation_offsets(&prob.contacts, &records, t, n, prob.skin))
        .collect::<Result<Vec<_>>>()?;
    let frames = prob
        .frames
        .iter()
        .zip(&offsets)
        .map(|(f, off)| apply_offsets(f, off))
        .collect();
    Ok(RefineOutcome {
        translations: records,
        offsets,
        frames,
        initial_objective,
        final_objective: report.value,
        report,
    })
}

/// Per-Gaussian offsets at `frame` from exported translation records.
///
/// Members of a contact set take their record's translation (averaged when a
/// Gaussian belongs to several sets). With `skin`, every other Gaussian adds
/// each set's mean translation scaled by the histogram intersection of its
/// weight row with the set's mean row.
pub fn translation_offsets(
    contacts: &[ContactSet],
    records: &[TranslationRecord],
    frame: usize,
    gaussians: usize,
    skin: Option<&[WeightRow]>,
) -> Result<Vec<Vector3<f64>>> {
    let lookup: HashMap<(&str, Option<usize>), Vector3<f64>> = records
        .iter()
        .filter(|r| r.frame == frame)
        .map(|r| ((r.marker.as_str(), r.gaussian), Vector3::from(r.t)))
        .collect();
    let mut row = vec![Vector3::zeros(); gaussians];
    let mut counts = vec![0usize; gaussians];
    let mut member = vec![false; gaussians];
    let mut marker_mean = Vec::with_capacity(contacts.len());
    for set in contacts {
        let mut mean = Vector3::zeros();
        for &k in &set.indices {
            if k >= gaussians {
                return Err(Error::arg(format!("marker {} indexes past the body", set.name)));
            }
            let v = lookup
                .get(&(set.name.as_str(), Some(k)))
                .or_else(|| lookup.get(&(set.name.as_str(), None)))
                .ok_or_else(|| Error::Data {
                    index: frame,
                    message: format!("no translation for marker {} at this frame", set.name),
                })?;
            row[k] += v;
            counts[k] += 1;
            member[k] = true;
            mean += v;
        }
        marker_mean.push(mean / set.indices.len() as f64);
    }
    for k in 0..gaussians {
        if counts[k] > 1 {
            row[k] /= counts[k] as f64;
        }
    }
    if let Some(skin) = skin {
        if skin.len() != gaussians {
            return Err(Error::arg("skin rows do not match the body"));
        }
        let mean_rows: Vec<WeightRow> = contacts
            .iter()
            .map(|c| mean_row(&c.indices.iter().map(|&k| &skin[k]).collect::<Vec<_>>()))
            .collect();
        for k in (0..gaussians).filter(|&k| !member[k]) {
            for (c, mean) in marker_mean.iter().enumerate() {
                let sim = similarity(&skin[k], &mean_rows[c]);
                if sim > 0.0 {
                    row[k] += mean * sim;
                }
            }
        }
    }
    Ok(row)
}

/// `x + T` per Gaussian; every other attribute is copied unchanged.
pub fn apply_offsets(frame: &GaussianSet, offsets: &[Vector3<f64>]) -> GaussianSet {
    frame
        .iter()
        .zip(offsets)
        .map(|(g, t)| if *t == Vector3::zeros() { g.clone() } else { g.with_center(g.center() + t) })
        .collect()
}

/// Per frame, the number of Gaussians with `d_beta < r / 2` that are not flagged
/// for contact. `contact_mask[t][k]` marks flagged Gaussians.
pub fn penetration_report(
    frames: &[GaussianSet],
    field: &DistanceField,
    r: f64,
    contact_mask: Option<&[Vec<bool>]>,
) -> Vec<usize> {
    let slack = (field.len() as f64).ln() / field.beta();
    frames
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            f.iter()
                .enumerate()
                .filter(|(k, g)| {
                    let flagged = contact_mask.is_some_and(|m| m[t].get(*k).copied().unwrap_or(false));
                    // d_beta >= d_nn - ln(N) / beta, so far points cannot count
                    !flagged && field.has_center_within(&g.center(), 0.5 * r + slack) && field.eval(&g.center()).0 < 0.5 * r
                })
                .count()
        })
        .collect()
}

/// Mask of Gaussians flagged for contact per frame.
///
/// With `skin`, a Gaussian outside every set is also flagged when its weight
/// row overlaps a flagged set's mean row by at least `CARRIED_SIMILARITY`,
/// since the set's translation carries it along.
pub fn contact_mask(
    contacts: &[ContactSet],
    frames: usize,
    gaussians: usize,
    skin: Option<&[WeightRow]>,
) -> Vec<Vec<bool>> {
    let carried: Vec<Vec<usize>> = contacts
        .iter()
        .map(|set| match skin {
            Some(skin) if skin.len() == gaussians => {
                let mean = mean_row(&set.indices.iter().filter_map(|&k| skin.get(k)).collect::<Vec<_>>());
                (0..gaussians).filter(|&k| similarity(&skin[k], &mean) >= CARRIED_SIMILARITY).collect()
            }
            _ => Vec::new(),
        })
        .collect();
    let mut mask = vec![vec![false; gaussians]; frames];
    for (set, carried) in contacts.iter().zip(&carried) {
        for (t, row) in mask.iter_mut().enumerate() {
            if set.flags.get(t).copied().unwrap_or(false) {
                for &k in set.indices.iter().chain(carried) {
                    if let Some(m) = row.get_mut(k) {
                        *m = true;
                    }
                }
            }
        }
    }
    mask
}

/// Row overlap above which a non-member counts as part of a contact.
pub const CARRIED_SIMILARITY: f64 = 0.5;
