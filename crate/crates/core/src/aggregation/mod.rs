//! Camera-aware feature gating and 3D deformable sampling over a
//! multi-view, multi-scale feature pyramid.

pub mod dump;
pub mod sampling;

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::Rng;

pub use sampling::{bilinear_sample, bilinear_sample_grad, FeatureGrid, Sample};

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraRig, Projection};
use crate::query::Query;

/// Offsets per query when the caller does not say otherwise.
pub const DEFAULT_OFFSETS: usize = 4;

/// Per-view feature levels, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    views: Vec<Vec<FeatureGrid>>,
}

impl FeaturePyramid {
    pub fn new(views: Vec<Vec<FeatureGrid>>) -> Result<Self> {
        let channels = views
            .first()
            .and_then(|v| v.first())
            .map(|g| g.channels())
            .ok_or_else(|| Error::InvalidConfig("pyramid has no levels".into()))?;
        let levels = views[0].len();
        for (vi, view) in views.iter().enumerate() {
            if view.len() != levels {
                return Err(Error::DimensionMismatch {
                    expected: levels,
                    got: view.len(),
                });
            }
            for pair in view.windows(2) {
                if !(pair[1].stride() > pair[0].stride()) {
                    return Err(Error::InvalidConfig(format!(
                        "view {vi}: strides must strictly increase"
                    )));
                }
            }
            if let Some(g) = view.iter().find(|g| g.channels() != channels) {
                return Err(Error::DimensionMismatch {
                    expected: channels,
                    got: g.channels(),
                });
            }
        }
        Ok(Self { views })
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_levels(&self) -> usize {
        self.views[0].len()
    }

    pub fn channels(&self) -> usize {
        self.views[0][0].channels()
    }

    pub fn level(&self, view: usize, level: usize) -> &FeatureGrid {
        &self.views[view][level]
    }

    pub fn view(&self, view: usize) -> &[FeatureGrid] {
        &self.views[view]
    }

    pub fn views_mut(&mut self) -> impl Iterator<Item = &mut Vec<FeatureGrid>> {
        self.views.iter_mut()
    }
}

/// Squeeze-and-excitation style gate conditioned on camera parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Length of [`camera_vector`].
pub const CAMERA_VECTOR_LEN: usize = 16;

impl GateParams {
    pub fn zeros(hidden: usize, channels: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, CAMERA_VECTOR_LEN),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(channels, hidden),
            b2: DVector::zeros(channels),
        }
    }

    pub fn random<R: Rng>(hidden: usize, channels: usize, scale: f64, rng: &mut R) -> Self {
        let mut u = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale));
        let w1 = u(hidden, CAMERA_VECTOR_LEN);
        let b1 = u(hidden, 1).column(0).into_owned();
        let w2 = u(channels, hidden);
        let b2 = u(channels, 1).column(0).into_owned();
        Self { w1, b1, w2, b2 }
    }

    pub fn channels(&self) -> usize {
        self.w2.nrows()
    }
}

/// `[fx/W, fy/H, cx/W, cy/H, R (row-major), t]`. Intrinsics are divided by the
/// image size so every entry is O(1).
pub fn camera_vector(cam: &Camera) -> [f64; CAMERA_VECTOR_LEN] {
    let k = &cam.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    let mut v = [0.0; CAMERA_VECTOR_LEN];
    v[..4].copy_from_slice(&[k.fx / w, k.fy / h, k.cx / w, k.cy / h]);
    for i in 0..3 {
        for j in 0..3 {
            v[4 + 3 * i + j] = cam.pose.rotation[(i, j)];
        }
    }
    v[13..].copy_from_slice(cam.pose.translation.as_slice());
    v
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-channel gate in (0, 1) for one camera.
pub fn gate_vector(cam: &Camera, g: &GateParams) -> Vec<f64> {
    let x = DVector::from_row_slice(&camera_vector(cam));
    let hidden = (&g.w1 * x + &g.b1).map(|v| v.max(0.0));
    (&g.w2 * hidden + &g.b2).iter().map(|v| sigmoid(*v)).collect()
}

/// Scales every cell of each view channelwise by that camera's gate.
pub fn camera_gate(pyr: &FeaturePyramid, rig: &CameraRig, g: &GateParams) -> Result<FeaturePyramid> {
    if pyr.num_views() != rig.len() {
        return Err(Error::Misaligned(format!(
            "pyramid has {} views, rig has {}",
            pyr.num_views(),
            rig.len()
        )));
    }
    if g.channels() != pyr.channels() {
        return Err(Error::DimensionMismatch {
            expected: pyr.channels(),
            got: g.channels(),
        });
    }
    let mut out = pyr.clone();
    for (cam, levels) in rig.cameras().iter().zip(out.views_mut()) {
        let gate = gate_vector(cam, g);
        for grid in levels.iter_mut() {
            for cell in grid.data_mut().chunks_mut(gate.len()) {
                for (x, s) in cell.iter_mut().zip(&gate) {
                    *x *= s;
                }
            }
        }
    }
    Ok(out)
}

/// Offsets (ego-frame meters) and raw attention logits for one query.
/// `weights[(m * views + v) * levels + l]` belongs to offset `m`, view `v`, level `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub offsets: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl SamplePlan {
    /// Equal logits for every sample.
    pub fn uniform(offsets: Vec<Vector3<f64>>, views: usize, levels: usize) -> Self {
        let n = offsets.len() * views * levels;
        Self {
            offsets,
            weights: vec![0.0; n],
        }
    }

    /// `m` offsets of length `radius` evenly spaced around the vertical axis.
    pub fn ring(m: usize, radius: f64, views: usize, levels: usize) -> Self {
        let offsets = (0..m)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / m as f64;
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        Self::uniform(offsets, views, levels)
    }

    pub fn weight_index(&self, m: usize, view: usize, level: usize, views: usize, levels: usize) -> usize {
        (m * views + view) * levels + level
    }

    fn check(&self, pyr: &FeaturePyramid) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(Error::PlanMismatch("plan has no offsets".into()));
        }
        let expected = self.offsets.len() * pyr.num_views() * pyr.num_levels();
        if self.weights.len() != expected {
            return Err(Error::PlanMismatch(format!(
                "{} weights for {} offsets x {} views x {} levels",
                self.weights.len(),
                self.offsets.len(),
                pyr.num_views(),
                pyr.num_levels()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::PlanMismatch("non-finite weight".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub value: Vec<f64>,
    pub valid_samples: usize,
    pub total_samples: usize,
}

impl Aggregation {
    pub fn all_invalid(&self) -> bool {
        self.valid_samples == 0
    }

    pub fn energy(&self) -> f64 {
        self.value.iter().map(|x| x * x).sum()
    }
}

/// One entry per (offset, view, level) combination that produced a valid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidSample {
    pub offset: usize,
    pub view: usize,
    pub level: usize,
    pub logit: f64,
    pub value: Vec<f64>,
}

/// Projects `point + offset` into every view and samples every level.
pub fn collect_samples(
    point: &Point3<f64>,
    plan: &SamplePlan,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
) -> Result<Vec<ValidSample>> {
    plan.check(pyr)?;
    if pyr.num_views() != rig.len() {
        return Err(Error::PlanMismatch(format!(
            "pyramid has {} views, rig has {}",
            pyr.num_views(),
            rig.len()
        )));
    }
    let (views, levels) = (pyr.num_views(), pyr.num_levels());
    let mut out = Vec::new();
    for (m, off) in plan.offsets.iter().enumerate() {
        let p = point + off;
        for view in 0..views {
            let Projection::InFront { pixel, .. } = rig.project_point(&p, view)? else {
                continue;
            };
            for level in 0..levels {
                let s = bilinear_sample(pyr.level(view, level), pixel.u, pixel.v);
                if s.valid {
                    out.push(ValidSample {
                        offset: m,
                        view,
                        level,
                        logit: plan.weights[plan.weight_index(m, view, level, views, levels)],
                        value: s.value,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Softmax-weighted sum of the valid samples around `point`; the softmax
/// runs jointly over offsets, views and levels, ignoring invalid samples.
pub fn aggregate_at(
    point: &Point3<f64>,
    plan: &SamplePlan,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
) -> Result<Aggregation> {
    let samples = collect_samples(point, plan, pyr, rig)?;
    let total_samples = plan.offsets.len() * pyr.num_views() * pyr.num_levels();
    let mut value = vec![0.0; pyr.channels()];
    if samples.is_empty() {
        return Ok(Aggregation {
            value,
            valid_samples: 0,
            total_samples,
        });
    }
    let max = samples.iter().map(|s| s.logit).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = samples.iter().map(|s| (s.logit - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    // accumulate deviations from the channel minimum so constant inputs are reproduced exactly
    let base: Vec<f64> = (0..value.len())
        .map(|c| samples.iter().map(|s| s.value[c]).fold(f64::INFINITY, f64::min))
        .collect();
    for (s, w) in samples.iter().zip(&weights) {
        let w = w / z;
        for ((acc, x), b) in value.iter_mut().zip(&s.value).zip(&base) {
            *acc += w * (x - b);
        }
    }
    for (acc, b) in value.iter_mut().zip(&base) {
        *acc += b;
    }
    Ok(Aggregation {
        value,
        valid_samples: samples.len(),
        total_samples,
    })
}

pub fn deformable_aggregate(
    q: &Query,
    plan: &SamplePlan,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
) -> Result<Aggregation> {
    aggregate_at(&q.ref_point, plan, pyr, rig)
}
