use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{drop_probability, SceneConfig};
use super::scene::{box_area, clip_box, iou_2d, project_box, Scene, SceneFrame};
use crate::aggregation::bilinear_sample;
use crate::depth::DepthDistribution;
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::metrics::Band;
use crate::query::Detection2D;
use crate::rng::{derive, seeded};

const TAG_DETECTOR: u64 = 3;

/// IoU a detection needs with the projected object box to count as a 2D hit.
pub const RECALL_IOU: f64 = 0.5;

/// Clutter box side range in pixels.
const CLUTTER_SIDE: (f64, f64) = (4.0, 40.0);
/// Clutter scores are drawn from `[floor, CLUTTER_SCORE_MAX)`.
const CLUTTER_SCORE_MAX: f64 = 0.3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameDetections {
    pub detections: Vec<Detection2D>,
    pub depths: Vec<DepthDistribution>,
    /// Index into the frame's GT list; `None` for clutter.
    pub gt_index: Vec<Option<usize>>,
    /// Camera-frame depth of the source object's center. For clutter, the
    /// depth the clutter was drawn at.
    pub gt_depth: Vec<f64>,
}

impl FrameDetections {
    fn push(&mut self, det: Detection2D, depth: DepthDistribution, gt: Option<usize>, d: f64) {
        self.detections.push(det);
        self.depths.push(depth);
        self.gt_index.push(gt);
        self.gt_depth.push(d);
    }
}

/// A (GT, view) pair whose projection lands in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisiblePair {
    pub gt: usize,
    pub view: usize,
    /// Projected box clipped to the image.
    pub bbox: [f64; 4],
}

pub fn visible_pairs(rig: &CameraRig, frame: &SceneFrame) -> Result<Vec<VisiblePair>> {
    let mut out = Vec::new();
    for (gt, b) in frame.gts.iter().enumerate() {
        for (view, cam) in rig.cameras().iter().enumerate() {
            if let Some(bbox) = project_box(rig, b, view)?.and_then(|pb| clip_box(pb, &cam.intrinsics)) {
                out.push(VisiblePair { gt, view, bbox });
            }
        }
    }
    Ok(out)
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Simulated 2D detector and depth head, one output per scene frame.
///
/// Each visible (object, view) pair survives with probability
/// `1 - drop(area)`; survivors get jittered corners, a size-driven score,
/// and a depth distribution built from a noisy depth draw. Clutter boxes
/// with low scores and random depths are added per view.
pub fn simulate_2d_detector(scene: &Scene, cfg: &SceneConfig, seed: u64) -> Result<Vec<FrameDetections>> {
    let noise = &cfg.detector;
    let bins = &cfg.depth_bins;
    let jitter = Normal::new(0.0, noise.sigma_px).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let clutter = if noise.false_positives_per_view > 0.0 {
        Some(Poisson::new(noise.false_positives_per_view).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let rig = &scene.rig;
    let mut out = Vec::with_capacity(scene.frames.len());
    for (fi, frame) in scene.frames.iter().enumerate() {
        let mut rng = seeded(derive(derive(seed, TAG_DETECTOR), fi as u64));
        let mut fd = FrameDetections::default();
        let context = |view: usize, u: f64, v: f64| bilinear_sample(frame.pyramid.level(view, 0), u, v).value;

        for pair in visible_pairs(rig, frame)? {
            let cam = rig.camera(pair.view)?;
            let k = &cam.intrinsics;
            let area = box_area(&pair.bbox);
            if rng.random::<f64>() < drop_probability(&noise.drop_curve, area) {
                continue;
            }
            let mut b = pair.bbox;
            if noise.sigma_px > 0.0 {
                for x in &mut b {
                    *x += jitter.sample(&mut rng);
                }
                b = [b[0].min(b[2]), b[1].min(b[3]), b[0].max(b[2]), b[1].max(b[3])];
            }
            let Some(b) = clip_box(b, k) else {
                continue;
            };
            let s = &noise.score;
            let score = (s.mean(area) + s.noise * gauss(&mut rng)).clamp(0.0, 1.0);
            let gt = &frame.gts[pair.gt];
            let d = cam.pose.ego_to_camera(&gt.center).z;
            let noisy = (d + cfg.depth_noise.sigma(d) * gauss(&mut rng)).clamp(bins.d_min, bins.d_max);
            let (cu, cv) = (0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3]));
            let det = Detection2D::new(pair.view, b, score, gt.category, context(pair.view, cu, cv))?;
            fd.push(det, bins.soft_label(noisy)?, Some(pair.gt), d);
        }

        if let Some(poisson) = &clutter {
            for (view, cam) in rig.cameras().iter().enumerate() {
                let k = &cam.intrinsics;
                let n = poisson.sample(&mut rng) as usize;
                for _ in 0..n {
                    let (lo, hi) = (CLUTTER_SIDE.0.ln(), CLUTTER_SIDE.1.ln());
                    let w = rng.random_range(lo..hi).exp();
                    let h = rng.random_range(lo..hi).exp();
                    let cu = rng.random::<f64>() * k.width as f64;
                    let cv = rng.random::<f64>() * k.height as f64;
                    let floor = noise.score.floor;
                    let score = floor + (CLUTTER_SCORE_MAX - floor) * rng.random::<f64>();
                    let d = (bins.d_min.ln() + rng.random::<f64>() * (bins.d_max / bins.d_min).ln()).exp();
                    let Some(b) = clip_box([cu - 0.5 * w, cv - 0.5 * h, cu + 0.5 * w, cv + 0.5 * h], k) else {
                        continue;
                    };
                    let (mu, mv) = (0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3]));
                    let det = Detection2D::new(view, b, score, 0, context(view, mu, mv))?;
                    fd.push(det, bins.soft_label(d)?, None, d);
                }
            }
        }
        out.push(fd);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRecall {
    pub band: Band,
    pub n_gt: usize,
    pub hits: usize,
    pub recall: f64,
}

/// Object-level 2D recall: an object counts once per frame if some detection
/// in any view overlaps its projected box by at least [`RECALL_IOU`].
pub fn recall_2d(scene: &Scene, dets: &[FrameDetections], bands: &[Band]) -> Result<Vec<BandRecall>> {
    if dets.len() != scene.frames.len() {
        return Err(Error::Misaligned(format!(
            "{} frames but {} detection sets",
            scene.frames.len(),
            dets.len()
        )));
    }
    let top = bands.iter().map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max);
    let mut n_gt = vec![0usize; bands.len()];
    let mut hits = vec![0usize; bands.len()];
    for (frame, fd) in scene.frames.iter().zip(dets) {
        let mut hit = vec![false; frame.gts.len()];
        for pair in visible_pairs(&scene.rig, frame)? {
            if hit[pair.gt] {
                continue;
            }
            hit[pair.gt] = fd
                .detections
                .iter()
                .any(|d| d.view == pair.view && iou_2d(&d.bbox, &pair.bbox) >= RECALL_IOU);
        }
        for (g, gt) in frame.gts.iter().enumerate() {
            let r = gt.ground_range();
            for (bi, b) in bands.iter().enumerate() {
                if b.contains(r, b.hi == top) {
                    n_gt[bi] += 1;
                    hits[bi] += hit[g] as usize;
                }
            }
        }
    }
    Ok(bands
        .iter()
        .enumerate()
        .map(|(i, &band)| BandRecall {
            band,
            n_gt: n_gt[i],
            hits: hits[i],
            recall: if n_gt[i] == 0 { 1.0 } else { hits[i] as f64 / n_gt[i] as f64 },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{default_bands, FAR_BAND, NEAR_BAND};
    use crate::sim::config::{DetectorNoise, DropPoint, GtSpec};
    use crate::sim::scene::gen_scene;

    fn cfg(detector: DetectorNoise) -> SceneConfig {
        SceneConfig {
            gt: GtSpec {
                count: 40,
                ..GtSpec::default()
            },
            detector,
            frames: 1,
            trajectory: vec![],
            ..SceneConfig::default()
        }
    }

    fn with_bands() -> Vec<Band> {
        let mut b = default_bands();
        b.push(Band::new(NEAR_BAND.lo, FAR_BAND.hi));
        b
    }

    #[test]
    fn noiseless_detector_has_full_recall() {
        let c = cfg(DetectorNoise::noiseless());
        let scene = gen_scene(&c).unwrap();
        let dets = simulate_2d_detector(&scene, &c, 1).unwrap();
        for r in recall_2d(&scene, &dets, &with_bands()).unwrap() {
            assert_eq!(r.recall, 1.0, "{r:?}");
        }
        assert!(dets[0].gt_index.iter().all(Option::is_some));
    }

    #[test]
    fn certain_drop_gives_nothing() {
        let c = cfg(DetectorNoise {
            drop_curve: vec![DropPoint { area: 0.0, drop: 1.0 }],
            false_positives_per_view: 0.0,
            ..DetectorNoise::default()
        });
        let scene = gen_scene(&c).unwrap();
        let dets = simulate_2d_detector(&scene, &c, 1).unwrap();
        assert!(dets[0].detections.is_empty());
    }

    #[test]
    fn outputs_are_aligned_and_valid() {
        let c = cfg(DetectorNoise::default());
        let scene = gen_scene(&c).unwrap();
        let fd = &simulate_2d_detector(&scene, &c, 4).unwrap()[0];
        assert_eq!(fd.detections.len(), fd.depths.len());
        assert_eq!(fd.detections.len(), fd.gt_index.len());
        assert!(fd.gt_index.iter().any(Option::is_none));
        for d in &fd.detections {
            d.validate().unwrap();
            assert_eq!(d.context.len(), c.features.channels);
        }
    }
}
