//! Range-modulated denoising groups built around ground-truth boxes.
//!
//! Each GT gets `groups` groups of one positive (jittered inside the box,
//! proportional to its size) and `negatives_per_group` negatives (pushed
//! away in the ground plane by a distance that grows with the GT's range).

use std::f64::consts::TAU;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boxes::{ground_range, Box3D};
use crate::error::{Error, Result};
use crate::query::{pos_embed, EmbedParams, Provenance, Query, QueryKind};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseForm {
    Log,
    Linear,
    Sqrt,
    Fixed,
}

impl NoiseForm {
    /// Range law `g(r)`; `log` uses `ln(1 + r)` so the origin is finite.
    pub fn apply(self, r: f64) -> f64 {
        match self {
            NoiseForm::Log => r.ln_1p(),
            NoiseForm::Linear => r,
            NoiseForm::Sqrt => r.sqrt(),
            NoiseForm::Fixed => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub form: NoiseForm,
    pub lambda: f64,
    pub groups: usize,
    pub negatives_per_group: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            form: NoiseForm::Log,
            lambda: 2.0,
            groups: 3,
            negatives_per_group: 2,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::InvalidConfig("denoise needs at least one group".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn queries_per_gt(&self) -> usize {
        self.groups * (1 + self.negatives_per_group)
    }
}

/// Positive offset for per-axis unit draws `u` in (-1, 1): `u ⊙ (w, l, h) / 2`
/// in the box frame, rotated into the ego frame.
pub fn positive_offset_from_unit(b: &Box3D, u: [f64; 3]) -> Vector3<f64> {
    let [w, l, h] = b.size;
    b.local_to_offset(Vector3::new(u[0] * 0.5 * w, u[1] * 0.5 * l, u[2] * 0.5 * h))
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random_range(-1.0..1.0);
        if x > -1.0 {
            return x;
        }
    }
}

pub fn positive_offset<R: Rng>(b: &Box3D, rng: &mut R) -> Vector3<f64> {
    let u = [open_unit(rng), open_unit(rng), open_unit(rng)];
    positive_offset_from_unit(b, u)
}

/// `λ · g(r)` with `r` the ground-plane range of `center`.
pub fn negative_magnitude(center: &Point3<f64>, spec: &NoiseSpec) -> f64 {
    spec.lambda * spec.form.apply(ground_range(center))
}

pub fn negative_offset_from_angle(center: &Point3<f64>, spec: &NoiseSpec, theta: f64) -> Vector3<f64> {
    let m = negative_magnitude(center, spec);
    Vector3::new(m * theta.cos(), m * theta.sin(), 0.0)
}

pub fn negative_offset<R: Rng>(center: &Point3<f64>, spec: &NoiseSpec, rng: &mut R) -> Vector3<f64> {
    let theta = rng.random_range(0.0..TAU);
    negative_offset_from_angle(center, spec, theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseGroup {
    pub gt_index: usize,
    pub group: usize,
    pub positive: Query,
    pub negatives: Vec<Query>,
}

impl DenoiseGroup {
    pub fn queries(&self) -> impl Iterator<Item = &Query> {
        std::iter::once(&self.positive).chain(&self.negatives)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseTarget {
    /// Positive: recover the full GT box.
    Regress(Box3D),
    /// Negative: class score supervised to this value (always 0).
    Reject { class_score: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGroups {
    pub groups: Vec<DenoiseGroup>,
    /// Aligned with [`NoiseGroups::queries`].
    pub targets: Vec<DenoiseTarget>,
}

impl NoiseGroups {
    pub fn queries(&self) -> impl Iterator<Item = &Query> {
        self.groups.iter().flat_map(|g| g.queries())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Builds all denoising groups. Each GT draws from its own stream seeded
/// with `seed ^ gt_index`, so the result does not depend on GT order
/// beyond indexing.
pub fn make_noise_groups(gts: &[Box3D], spec: &NoiseSpec, params: &EmbedParams, seed: u64) -> Result<NoiseGroups> {
    spec.validate()?;
    let mut groups = Vec::with_capacity(gts.len() * spec.groups);
    let mut targets = Vec::with_capacity(gts.len() * spec.queries_per_gt());
    for (gi, gt) in gts.iter().enumerate() {
        let mut rng = seeded(seed ^ gi as u64);
        for g in 0..spec.groups {
            let make = |kind, p: Point3<f64>| Query {
                kind,
                ref_point: p,
                embedding: pos_embed(&p, params).as_slice().to_vec(),
                score: 0.0,
                source: Provenance {
                    gt: Some(gi),
                    group: Some(g),
                    category: Some(gt.category),
                    ..Provenance::default()
                },
            };
            let positive = make(QueryKind::DenoisePositive, gt.center + positive_offset(gt, &mut rng));
            targets.push(DenoiseTarget::Regress(*gt));
            let negatives = (0..spec.negatives_per_group)
                .map(|_| {
                    targets.push(DenoiseTarget::Reject { class_score: 0.0 });
                    make(
                        QueryKind::DenoiseNegative,
                        gt.center + negative_offset(&gt.center, spec, &mut rng),
                    )
                })
                .collect();
            groups.push(DenoiseGroup {
                gt_index: gi,
                group: g,
                positive,
                negatives,
            });
        }
    }
    Ok(NoiseGroups { groups, targets })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub gt_index: usize,
    pub group: usize,
    pub negative: usize,
    /// Distance from the GT center minus the box half-diagonal; negative
    /// values mean the sample may sit inside the box.
    pub margin: f64,
}

pub fn separation_margin(groups: &[DenoiseGroup], gts: &[Box3D]) -> Result<Vec<Margin>> {
    let mut out = Vec::new();
    for g in groups {
        let gt = gts.get(g.gt_index).ok_or(Error::DanglingGt(g.gt_index))?;
        for (k, q) in g.negatives.iter().enumerate() {
            out.push(Margin {
                gt_index: g.gt_index,
                group: g.group,
                negative: k,
                margin: (q.ref_point - gt.center).norm() - gt.half_diagonal(),
            });
        }
    }
    Ok(out)
}
