use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::config::SceneConfig;
use super::detector::{recall_2d, simulate_2d_detector, BandRecall, FrameDetections};
use super::scene::Scene;
use crate::aggregation::{aggregate_at, camera_gate, Aggregation, FeaturePyramid, GateParams, SamplePlan};
use crate::boxes::{Box3D, RangeBox};
use crate::denoise::{make_noise_groups, separation_margin};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::metrics::{default_bands, range_band_metrics, Band, EvalFrame, MetricsReport, RunMeta, ScoredBox, DEFAULT_THRESHOLDS};
use crate::query::{
    assemble_query_set, generate_adaptive_queries, make_global_queries, DepthSource, EmbedParams, Query, QueryKind,
    DEFAULT_TAU,
};
use crate::rng::{derive, seeded};
use crate::temporal::{ego_compensate, reposition, select_propagated};

/// Global query budget used when none is given.
pub const DEFAULT_GLOBAL_QUERIES: usize = 644;

/// Refinement iterations per query.
pub const HILL_STEPS: usize = 3;

const GATE_HIDDEN: usize = 8;
const GATE_SCALE: f64 = 0.5;

const TAG_DETECTIONS: u64 = 10;
const TAG_GLOBAL: u64 = 11;
const TAG_EMBED: u64 = 12;
const TAG_GATE: u64 = 13;
const TAG_DENOISE: u64 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    GlobalOnly,
    AdaptiveOnly,
    AdaptivePlusGlobal,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [
        VariantKind::GlobalOnly,
        VariantKind::AdaptiveOnly,
        VariantKind::AdaptivePlusGlobal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::GlobalOnly => "global_only",
            VariantKind::AdaptiveOnly => "adaptive_only",
            VariantKind::AdaptivePlusGlobal => "adaptive_plus_global",
        }
    }

    pub fn uses_global(self) -> bool {
        self != VariantKind::AdaptiveOnly
    }

    pub fn uses_adaptive(self) -> bool {
        self != VariantKind::GlobalOnly
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineVariant {
    pub kind: VariantKind,
    pub n_global: usize,
    pub tau: f64,
    pub use_gt_depth: bool,
}

impl PipelineVariant {
    pub fn new(kind: VariantKind) -> Self {
        Self {
            kind,
            n_global: DEFAULT_GLOBAL_QUERIES,
            tau: DEFAULT_TAU,
            use_gt_depth: false,
        }
    }

    pub fn with_globals(self, n_global: usize) -> Self {
        Self { n_global, ..self }
    }
}

/// Share of GT with a query point within each threshold, pooled over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageBand {
    pub band: Band,
    pub n_gt: usize,
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
}

impl CoverageBand {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds.iter().position(|t| *t == threshold).map(|i| self.recall[i])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub detections: usize,
    pub global: usize,
    pub adaptive: usize,
    pub propagated: usize,
    /// Built for the frame's GT but never run through inference.
    pub denoise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub coverage: Vec<CoverageBand>,
    pub recall_2d: Vec<BandRecall>,
    pub frames: Vec<FrameCounts>,
    /// Smallest distance by which a denoising negative clears its GT's
    /// positive band; `None` when no negatives were built.
    pub min_denoise_margin: Option<f64>,
}

impl Diagnostics {
    pub fn coverage(&self, band: Band) -> Option<&CoverageBand> {
        self.coverage.iter().find(|c| c.band == band)
    }

    pub fn recall_2d(&self, band: Band) -> Option<&BandRecall> {
        self.recall_2d.iter().find(|c| c.band == band)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub detections: Vec<FrameDetections>,
    /// Inference queries per frame, before refinement.
    pub queries: Vec<Vec<Query>>,
    pub predictions: Vec<Vec<ScoredBox>>,
    pub report: MetricsReport,
    pub diagnostics: Diagnostics,
}

/// The default partition followed by the band spanning it.
pub fn report_bands() -> Vec<Band> {
    let mut bands = default_bands();
    if let (Some(first), Some(last)) = (bands.first().copied(), bands.last().copied()) {
        bands.push(Band::new(first.lo, last.hi));
    }
    bands
}

/// Fraction of GT (pooled over frames) with at least one point within each
/// 3D center distance. `points` and `gts` are per frame.
pub fn query_coverage(
    points: &[Vec<Point3<f64>>],
    gts: &[Vec<Box3D>],
    bands: &[Band],
    thresholds: &[f64],
) -> Result<Vec<CoverageBand>> {
    if points.len() != gts.len() {
        return Err(Error::Misaligned(format!(
            "{} point sets but {} GT sets",
            points.len(),
            gts.len()
        )));
    }
    let top = bands.iter().map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max);
    let mut n_gt = vec![0usize; bands.len()];
    let mut hits = vec![vec![0usize; thresholds.len()]; bands.len()];
    for (pts, frame_gts) in points.iter().zip(gts) {
        for gt in frame_gts {
            let nearest = pts
                .iter()
                .map(|p| (p - gt.center).norm())
                .fold(f64::INFINITY, f64::min);
            let r = gt.ground_range();
            for (bi, b) in bands.iter().enumerate() {
                if !b.contains(r, b.hi == top) {
                    continue;
                }
                n_gt[bi] += 1;
                for (ti, t) in thresholds.iter().enumerate() {
                    hits[bi][ti] += (nearest <= *t) as usize;
                }
            }
        }
    }
    Ok(bands
        .iter()
        .enumerate()
        .map(|(bi, &band)| CoverageBand {
            band,
            n_gt: n_gt[bi],
            thresholds: thresholds.to_vec(),
            recall: hits[bi]
                .iter()
                .map(|h| if n_gt[bi] == 0 { 1.0 } else { *h as f64 / n_gt[bi] as f64 })
                .collect(),
        })
        .collect())
}

/// Greedy ascent of aggregated feature energy: each step moves to the best
/// of the plan's offsets around the current point, stopping when none beats
/// staying put.
pub fn hill_refine(
    start: Point3<f64>,
    plan: &SamplePlan,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    range: &RangeBox,
    steps: usize,
) -> Result<(Point3<f64>, Aggregation)> {
    let mut cur = start;
    let mut agg = aggregate_at(&cur, plan, pyr, rig)?;
    for _ in 0..steps {
        let mut best: Option<(Point3<f64>, Aggregation)> = None;
        let mut best_e = agg.energy();
        for off in &plan.offsets {
            let cand = cur + off;
            if !range.contains(&cand) {
                continue;
            }
            let a = aggregate_at(&cand, plan, pyr, rig)?;
            if a.energy() > best_e {
                best_e = a.energy();
                best = Some((cand, a));
            }
        }
        match best {
            Some((p, a)) => {
                cur = p;
                agg = a;
            }
            None => break,
        }
    }
    Ok((cur, agg))
}

fn template_size(cfg: &SceneConfig, category: Option<u32>) -> [f64; 3] {
    category
        .and_then(|c| cfg.templates.iter().find(|t| t.category == c))
        .unwrap_or(&cfg.templates[0])
        .size
}

pub fn embed_params(cfg: &SceneConfig) -> EmbedParams {
    let e = &cfg.embed;
    EmbedParams::random(
        e.dim,
        e.frequencies,
        cfg.features.channels,
        e.hidden,
        cfg.range,
        derive(cfg.seed, TAG_EMBED),
    )
}

/// Runs detection, query construction, aggregation, refinement and
/// evaluation over every frame of `scene`. Frames run in order because the
/// query memory carries from one to the next.
pub fn run_pipeline(scene: &Scene, variant: &PipelineVariant, cfg: &SceneConfig) -> Result<PipelineOutput> {
    if !(0.0..=1.0).contains(&variant.tau) {
        return Err(Error::InvalidConfig(format!("tau {} outside [0, 1]", variant.tau)));
    }
    let rig = &scene.rig;
    let params = embed_params(cfg);
    let gate = GateParams::random(
        GATE_HIDDEN,
        cfg.features.channels,
        GATE_SCALE,
        &mut seeded(derive(cfg.seed, TAG_GATE)),
    );
    let detections = simulate_2d_detector(scene, cfg, derive(cfg.seed, TAG_DETECTIONS))?;
    let global = if variant.kind.uses_global() {
        make_global_queries(variant.n_global, derive(cfg.seed, TAG_GLOBAL), &params, &cfg.range)
    } else {
        vec![]
    };

    let mut stored: Vec<Query> = Vec::new();
    let mut all_queries = Vec::with_capacity(scene.frames.len());
    let mut predictions = Vec::with_capacity(scene.frames.len());
    let mut counts = Vec::with_capacity(scene.frames.len());
    let mut min_margin: Option<f64> = None;

    for (fi, (frame, fd)) in scene.frames.iter().zip(&detections).enumerate() {
        let plan = SamplePlan::ring(cfg.offsets, cfg.offset_radius, rig.len(), frame.pyramid.num_levels());
        let adaptive = if variant.kind.uses_adaptive() {
            let source = if variant.use_gt_depth {
                DepthSource::GroundTruth(&fd.gt_depth)
            } else {
                DepthSource::Decoded
            };
            generate_adaptive_queries(&fd.detections, &fd.depths, rig, &cfg.depth_bins, &params, variant.tau, source)?
        } else {
            vec![]
        };
        let propagated: Vec<Query> = stored
            .iter()
            .map(|q| ego_compensate(q, &frame.motion, &params))
            .filter(|q| cfg.range.contains(&q.ref_point))
            .collect();
        let queries = assemble_query_set(&global, &adaptive, &propagated)?;

        let groups = make_noise_groups(&frame.gts, &cfg.denoise, &params, derive(derive(cfg.seed, TAG_DENOISE), fi as u64))?;
        for m in separation_margin(&groups.groups, &frame.gts)? {
            min_margin = Some(min_margin.map_or(m.margin, |x: f64| x.min(m.margin)));
        }
        counts.push(FrameCounts {
            detections: fd.detections.len(),
            global: global.len(),
            adaptive: adaptive.len(),
            propagated: propagated.len(),
            denoise: groups.len(),
        });

        let gated = camera_gate(&frame.pyramid, rig, &gate)?;
        let mut refined = Vec::with_capacity(queries.len());
        let mut scores = Vec::with_capacity(queries.len());
        let mut preds = Vec::new();
        for q in &queries {
            debug_assert!(!q.kind.is_denoise());
            let (p, agg) = hill_refine(q.ref_point, &plan, &gated, rig, &cfg.range, HILL_STEPS)?;
            let energy = agg.energy();
            if !agg.all_invalid() {
                let category = match q.kind {
                    QueryKind::Global => None,
                    _ => q.source.category,
                };
                preds.push(ScoredBox {
                    bbox: Box3D::new(p, template_size(cfg, category), 0.0, category.unwrap_or(0))?,
                    score: energy,
                });
            }
            refined.push(reposition(q, p, &params));
            scores.push(energy);
        }
        stored = select_propagated(&refined, &scores, cfg.memory_capacity)?;
        all_queries.push(queries);
        predictions.push(preds);
    }

    let bands = report_bands();
    let points: Vec<Vec<Point3<f64>>> = all_queries
        .iter()
        .map(|qs| qs.iter().map(|q| q.ref_point).collect())
        .collect();
    let gts: Vec<Vec<Box3D>> = scene.frames.iter().map(|f| f.gts.clone()).collect();
    let coverage = query_coverage(&points, &gts, &bands, &DEFAULT_THRESHOLDS)?;
    let diagnostics = Diagnostics {
        coverage,
        recall_2d: recall_2d(scene, &detections, &bands)?,
        frames: counts,
        min_denoise_margin: min_margin,
    };
    let eval: Vec<EvalFrame> = predictions
        .iter()
        .zip(&gts)
        .map(|(p, g)| EvalFrame {
            preds: p.clone(),
            gts: g.clone(),
        })
        .collect();
    let meta = RunMeta {
        variant: variant.kind.name().to_string(),
        seed: cfg.seed,
        ..RunMeta::default()
    };
    let report = range_band_metrics(&eval, &default_bands(), &DEFAULT_THRESHOLDS, meta)?;
    Ok(PipelineOutput {
        detections,
        queries: all_queries,
        predictions,
        report,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{DetectorNoise, GtSpec};
    use crate::sim::scene::gen_scene;

    fn cfg() -> SceneConfig {
        SceneConfig {
            gt: GtSpec {
                count: 30,
                ..GtSpec::default()
            },
            frames: 2,
            trajectory: vec![Default::default()],
            ..SceneConfig::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for k in VariantKind::ALL {
            assert_eq!(k.name().parse::<VariantKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("both".parse::<VariantKind>().is_err());
    }

    #[test]
    fn empty_global_budget_predicts_nothing() {
        let c = SceneConfig {
            memory_capacity: 0,
            ..cfg()
        };
        let scene = gen_scene(&c).unwrap();
        let out = run_pipeline(&scene, &PipelineVariant::new(VariantKind::GlobalOnly).with_globals(0), &c).unwrap();
        assert!(out.predictions.iter().all(Vec::is_empty));
        for b in &out.report.bands {
            assert!(b.thresholds.iter().all(|t| t.recall == 0.0 || b.empty_gt));
        }
        for c in &out.diagnostics.coverage {
            assert!(c.recall.iter().all(|r| *r == 0.0 || c.n_gt == 0));
        }
    }

    #[test]
    fn perfect_front_end_covers_everything() {
        let c = SceneConfig {
            detector: DetectorNoise::noiseless(),
            ..cfg()
        };
        let scene = gen_scene(&c).unwrap();
        let v = PipelineVariant {
            use_gt_depth: true,
            tau: 0.0,
            ..PipelineVariant::new(VariantKind::AdaptiveOnly)
        };
        let out = run_pipeline(&scene, &v, &c).unwrap();
        for cov in &out.diagnostics.coverage {
            assert_eq!(cov.at(2.0), Some(1.0), "{cov:?}");
        }
    }

    #[test]
    fn coverage_counts_nearest_point() {
        let gt = Box3D::new(Point3::new(10.0, 0.0, 0.8), [2.0, 4.0, 1.6], 0.0, 0).unwrap();
        let far_gt = Box3D::new(Point3::new(80.0, 0.0, 0.8), [2.0, 4.0, 1.6], 0.0, 0).unwrap();
        let pts = vec![vec![Point3::new(11.5, 0.0, 0.8), Point3::new(80.0, 3.0, 0.8)]];
        let cov = query_coverage(&pts, &[vec![gt, far_gt]], &report_bands(), &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(cov[0].recall, vec![0.0, 1.0, 1.0]);
        assert_eq!(cov[1].recall, vec![0.0, 0.0, 1.0]);
        assert_eq!(cov[2].recall, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = cfg();
        let scene = gen_scene(&c).unwrap();
        let v = PipelineVariant::new(VariantKind::AdaptivePlusGlobal).with_globals(100);
        let a = run_pipeline(&scene, &v, &c).unwrap();
        let b = run_pipeline(&scene, &v, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.diagnostics.frames[1].propagated > 0);
        assert!(a.diagnostics.min_denoise_margin.is_some());
    }
}
