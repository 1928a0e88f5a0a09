use serde::{Deserialize, Serialize};

use crate::boxes::RangeBox;
use crate::denoise::NoiseSpec;
use crate::depth::DepthBinConfig;
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, RigFile};
use crate::temporal::DEFAULT_MEMORY_CAPACITY;

/// Share of GT objects placed in one ground-range band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandWeight {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GtSpec {
    /// Objects in the world.
    pub count: usize,
    /// No object is placed closer than this (ground range, meters).
    pub min_range: f64,
    pub bands: Vec<BandWeight>,
}

impl Default for GtSpec {
    fn default() -> Self {
        Self {
            count: 80,
            min_range: 8.0,
            bands: vec![
                BandWeight {
                    lo: 0.0,
                    hi: 50.0,
                    weight: 0.35,
                },
                BandWeight {
                    lo: 50.0,
                    hi: 150.0,
                    weight: 0.65,
                },
            ],
        }
    }
}

/// Object size `(w, l, h)` for one category; `jitter` is the relative
/// half-width of the uniform size perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeTemplate {
    pub category: u32,
    pub size: [f64; 3],
    pub jitter: f64,
    pub weight: f64,
}

pub fn default_templates() -> Vec<SizeTemplate> {
    vec![
        SizeTemplate {
            category: 0,
            size: [1.9, 4.6, 1.7],
            jitter: 0.1,
            weight: 0.6,
        },
        SizeTemplate {
            category: 1,
            size: [2.6, 9.0, 3.4],
            jitter: 0.1,
            weight: 0.15,
        },
        SizeTemplate {
            category: 2,
            size: [0.7, 0.7, 1.8],
            jitter: 0.1,
            weight: 0.25,
        },
    ]
}

/// Knot of the piecewise-linear drop-probability curve over pixel area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropPoint {
    pub area: f64,
    pub drop: f64,
}

/// Interpolates `curve` at `area`, holding the end values outside it.
pub fn drop_probability(curve: &[DropPoint], area: f64) -> f64 {
    let Some(first) = curve.first() else {
        return 0.0;
    };
    if area <= first.area {
        return first.drop;
    }
    for w in curve.windows(2) {
        if area <= w[1].area {
            let t = (area - w[0].area) / (w[1].area - w[0].area);
            return w[0].drop + t * (w[1].drop - w[0].drop);
        }
    }
    curve[curve.len() - 1].drop
}

/// Detection score: `floor + (1 - floor) * sigmoid(slope * ln(area / area_mid))`
/// plus gaussian noise, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub floor: f64,
    pub area_mid: f64,
    pub slope: f64,
    pub noise: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            floor: 0.02,
            area_mid: 64.0,
            slope: 1.2,
            noise: 0.05,
        }
    }
}

impl ScoreModel {
    pub fn mean(&self, area: f64) -> f64 {
        let z = self.slope * (area.max(1e-9) / self.area_mid).ln();
        self.floor + (1.0 - self.floor) / (1.0 + (-z).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorNoise {
    pub sigma_px: f64,
    pub drop_curve: Vec<DropPoint>,
    pub score: ScoreModel,
    /// Mean clutter detections per view and frame.
    pub false_positives_per_view: f64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        let knots = [(0.0, 1.0), (16.0, 0.7), (64.0, 0.25), (256.0, 0.08), (1024.0, 0.03), (4096.0, 0.02)];
        Self {
            sigma_px: 1.0,
            drop_curve: knots.iter().map(|&(area, drop)| DropPoint { area, drop }).collect(),
            score: ScoreModel::default(),
            false_positives_per_view: 1.5,
        }
    }
}

impl DetectorNoise {
    /// No jitter, no drops, no clutter.
    pub fn noiseless() -> Self {
        Self {
            sigma_px: 0.0,
            drop_curve: vec![DropPoint { area: 0.0, drop: 0.0 }],
            score: ScoreModel {
                noise: 0.0,
                ..ScoreModel::default()
            },
            false_positives_per_view: 0.0,
        }
    }
}

/// Depth error standard deviation `a + b * d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoise {
    pub a: f64,
    pub b: f64,
}

impl Default for DepthNoise {
    fn default() -> Self {
        Self { a: 0.2, b: 0.02 }
    }
}

impl DepthNoise {
    pub fn sigma(&self, d: f64) -> f64 {
        self.a + self.b * d
    }
}

/// Ego displacement between consecutive frames, in the previous ego frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoStep {
    pub forward: f64,
    pub lateral: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub channels: usize,
    pub strides: Vec<f64>,
    /// Peak amplitude of the smooth background field.
    pub field_amplitude: f64,
    /// Peak amplitude of the bump at each projected object center.
    pub bump_amplitude: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            strides: vec![8.0, 16.0, 32.0, 64.0],
            field_amplitude: 0.3,
            bump_amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedSpec {
    pub dim: usize,
    pub frequencies: usize,
    pub hidden: usize,
}

impl Default for EmbedSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            frequencies: 4,
            hidden: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Camera rig; the default seven-camera ring when absent.
    pub rig: Option<RigFile>,
    pub range: RangeBox,
    pub gt: GtSpec,
    pub templates: Vec<SizeTemplate>,
    pub detector: DetectorNoise,
    pub depth_noise: DepthNoise,
    pub depth_bins: DepthBinConfig,
    pub denoise: NoiseSpec,
    pub frames: usize,
    /// One step per frame after the first; empty means a static ego.
    pub trajectory: Vec<EgoStep>,
    pub features: FeatureSpec,
    pub embed: EmbedSpec,
    /// Sampling offsets per query.
    pub offsets: usize,
    /// Offset ring radius, meters.
    pub offset_radius: f64,
    pub memory_capacity: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rig: None,
            range: RangeBox::default(),
            gt: GtSpec::default(),
            templates: default_templates(),
            detector: DetectorNoise::default(),
            depth_noise: DepthNoise::default(),
            depth_bins: DepthBinConfig::default(),
            denoise: NoiseSpec::default(),
            frames: 3,
            trajectory: vec![
                EgoStep {
                    forward: 1.5,
                    lateral: 0.0,
                    yaw: 0.0,
                };
                2
            ],
            features: FeatureSpec::default(),
            embed: EmbedSpec::default(),
            offsets: crate::aggregation::DEFAULT_OFFSETS,
            offset_radius: 1.0,
            memory_capacity: DEFAULT_MEMORY_CAPACITY,
            seed: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl SceneConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rig(&self) -> Result<CameraRig> {
        match &self.rig {
            Some(r) => r.clone().into_rig(),
            None => Ok(CameraRig::default_ring()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        for i in 0..2 {
            if self.range.min[i] != -self.range.max[i] {
                return Err(invalid("range box must be symmetric about the ego"));
            }
        }
        self.rig()?;
        self.depth_bins.validate()?;
        self.denoise.validate()?;

        let gt = &self.gt;
        if !(gt.min_range >= 0.0) {
            return Err(invalid("gt.min_range must be non-negative"));
        }
        if gt.count > 0 && gt.bands.is_empty() {
            return Err(invalid("gt.bands is empty"));
        }
        for b in &gt.bands {
            if !(b.lo >= 0.0 && b.hi > b.lo && b.weight >= 0.0 && b.weight.is_finite()) {
                return Err(invalid(format!("bad GT band {b:?}")));
            }
        }
        if gt.count > 0 && gt.bands.iter().map(|b| b.weight).sum::<f64>() <= 0.0 {
            return Err(invalid("GT band weights sum to zero"));
        }
        if self.templates.is_empty() {
            return Err(invalid("no size templates"));
        }
        for t in &self.templates {
            if t.size.iter().any(|s| !(*s > 0.0)) || !(0.0..1.0).contains(&t.jitter) || !(t.weight >= 0.0) {
                return Err(invalid(format!("bad size template {t:?}")));
            }
        }
        if self.templates.iter().map(|t| t.weight).sum::<f64>() <= 0.0 {
            return Err(invalid("template weights sum to zero"));
        }

        let det = &self.detector;
        if !(det.sigma_px >= 0.0) || !(det.false_positives_per_view >= 0.0) {
            return Err(invalid("detector noise must be non-negative"));
        }
        if det.drop_curve.is_empty() {
            return Err(invalid("drop curve is empty"));
        }
        for w in det.drop_curve.windows(2) {
            if !(w[1].area > w[0].area) {
                return Err(invalid("drop curve areas must increase"));
            }
            if w[1].drop > w[0].drop {
                return Err(invalid("drop curve must be nonincreasing in area"));
            }
        }
        if det.drop_curve.iter().any(|p| !(0.0..=1.0).contains(&p.drop)) {
            return Err(invalid("drop probabilities must lie in [0, 1]"));
        }
        let s = &det.score;
        if !(0.0..1.0).contains(&s.floor) || !(s.area_mid > 0.0) || !(s.slope >= 0.0) || !(s.noise >= 0.0) {
            return Err(invalid("bad score model"));
        }
        if !(self.depth_noise.a >= 0.0 && self.depth_noise.b >= 0.0) {
            return Err(invalid("depth noise must be non-negative"));
        }

        if self.frames == 0 {
            return Err(invalid("frames must be positive"));
        }
        if !self.trajectory.is_empty() && self.trajectory.len() != self.frames - 1 {
            return Err(invalid(format!(
                "trajectory has {} steps for {} frames",
                self.trajectory.len(),
                self.frames
            )));
        }
        let f = &self.features;
        if f.channels == 0 || f.strides.is_empty() || f.strides.iter().any(|s| !(*s >= 1.0)) {
            return Err(invalid("bad feature spec"));
        }
        if f.strides.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("strides must increase"));
        }
        if !(f.field_amplitude >= 0.0 && f.bump_amplitude >= 0.0) {
            return Err(invalid("feature amplitudes must be non-negative"));
        }
        if self.embed.dim == 0 || self.embed.frequencies == 0 || self.embed.hidden == 0 {
            return Err(invalid("embedding sizes must be positive"));
        }
        if self.offsets == 0 || !(self.offset_radius > 0.0) {
            return Err(invalid("need at least one sampling offset and a positive radius"));
        }
        Ok(())
    }
}
