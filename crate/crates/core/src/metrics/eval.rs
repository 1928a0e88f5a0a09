//! Center-distance detection metrics: greedy matching, recall, AP, TP errors,
//! and range-banded reports.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use crate::boxes::{aligned_iou, Box3D};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 2.0, 4.0];

/// Center-distance threshold used to pick the pairs for ATE/ASE/AOE.
pub const TP_ERROR_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub score: f64,
}

fn dist(a: &Box3D, b: &Box3D) -> f64 {
    (a.center - b.center).norm()
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.iter().any(|t| !(*t > 0.0)) || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(format!(
            "thresholds must be positive and sorted: {thresholds:?}"
        )));
    }
    Ok(())
}

/// Prediction indices by descending score, ties to the lower index.
pub fn score_order(preds: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
}

/// Walks predictions in [`score_order`]; each takes the nearest unmatched GT
/// within `threshold` (ties to the lower GT index). Returns the matched GT
/// for every prediction, indexed like `preds`.
pub fn greedy_match(preds: &[ScoredBox], gts: &[Box3D], threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gts.len()];
    let mut out = vec![None; preds.len()];
    for p in score_order(preds) {
        let mut best: Option<(f64, usize)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let d = dist(&preds[p].bbox, gt);
            if d <= threshold && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, g));
            }
        }
        if let Some((_, g)) = best {
            taken[g] = true;
            out[p] = Some(g);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub threshold: f64,
    pub recall: f64,
    /// No GT: recall is reported as 1.0 by convention.
    pub empty_gt: bool,
}

pub fn recall_at(preds: &[ScoredBox], gts: &[Box3D], thresholds: &[f64]) -> Result<Vec<RecallAt>> {
    check_thresholds(thresholds)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            if gts.is_empty() {
                return RecallAt {
                    threshold: t,
                    recall: 1.0,
                    empty_gt: true,
                };
            }
            let hits = greedy_match(preds, gts, t).iter().flatten().count();
            RecallAt {
                threshold: t,
                recall: hits as f64 / gts.len() as f64,
                empty_gt: false,
            }
        })
        .collect())
}

/// Area under the precision envelope for a ranked TP/FP list.
pub fn ap_from_ranked(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &hit) in tp_flags.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: f64,
    pub empty_gt: bool,
}

pub fn average_precision(preds: &[ScoredBox], gts: &[Box3D], threshold: f64) -> Result<ApResult> {
    check_thresholds(&[threshold])?;
    let matched = greedy_match(preds, gts, threshold);
    let flags: Vec<bool> = score_order(preds).iter().map(|&p| matched[p].is_some()).collect();
    Ok(ApResult {
        ap: ap_from_ranked(&flags, gts.len()),
        empty_gt: gts.is_empty(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpErrors {
    pub ate: f64,
    pub ase: f64,
    pub aoe: f64,
    pub count: usize,
}

/// Smallest absolute difference between two headings, in `[0, π]`.
pub fn yaw_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Mean translation, scale (1 - aligned IoU) and orientation errors over
/// `(pred, gt)` pairs; `None` when there are no pairs.
pub fn tp_errors(pairs: &[(Box3D, Box3D)]) -> Option<TpErrors> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let (mut ate, mut ase, mut aoe) = (0.0, 0.0, 0.0);
    for (p, g) in pairs {
        ate += dist(p, g);
        ase += 1.0 - aligned_iou(&p.size, &g.size);
        aoe += yaw_error(p.yaw, g.yaw);
    }
    Some(TpErrors {
        ate: ate / n,
        ase: ase / n,
        aoe: aoe / n,
        count: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Optimal one-to-one matching on center distance.
pub fn match_boxes(preds: &[Box3D], gts: &[Box3D]) -> Result<MatchResult> {
    let cost: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| gts.iter().map(|g| dist(p, g)).collect())
        .collect();
    let a = hungarian(&cost)?;
    let distances = a.pairs.iter().map(|&(p, g)| cost[p][g]).collect();
    Ok(MatchResult {
        pairs: a.pairs,
        distances,
        unmatched_preds: if gts.is_empty() {
            (0..preds.len()).collect()
        } else {
            a.unmatched_rows
        },
        unmatched_gts: if preds.is_empty() {
            (0..gts.len()).collect()
        } else {
            a.unmatched_cols
        },
    })
}

/// Ground-plane range interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, r: f64, closed_top: bool) -> bool {
        self.lo <= r && (r < self.hi || (closed_top && r == self.hi))
    }
}

pub const NEAR_BAND: Band = Band::new(0.0, 50.0);
pub const FAR_BAND: Band = Band::new(50.0, 150.0);

pub fn default_bands() -> Vec<Band> {
    vec![NEAR_BAND, FAR_BAND]
}

/// Sorts and checks that bands do not overlap.
pub fn validate_bands(bands: &[Band]) -> Result<Vec<Band>> {
    let mut sorted = bands.to_vec();
    if sorted.iter().any(|b| !(b.lo < b.hi) || b.lo < 0.0) {
        return Err(Error::InvalidConfig(format!("malformed bands {bands:?}")));
    }
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in sorted.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(Error::OverlappingBands(w[0].lo, w[0].hi, w[1].lo, w[1].hi));
        }
    }
    Ok(sorted)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalFrame {
    pub preds: Vec<ScoredBox>,
    pub gts: Vec<Box3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub recall: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub band: Band,
    pub n_gt: usize,
    pub n_pred: usize,
    pub empty_gt: bool,
    pub thresholds: Vec<ThresholdMetrics>,
    pub tp: Option<TpErrors>,
}

impl BandMetrics {
    pub fn at(&self, threshold: f64) -> Option<&ThresholdMetrics> {
        self.thresholds.iter().find(|t| t.threshold == threshold)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub variant: String,
    pub seed: u64,
    pub frames: usize,
    pub n_gt: usize,
    pub n_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: RunMeta,
    pub tp_threshold: f64,
    pub bands: Vec<BandMetrics>,
}

impl MetricsReport {
    pub fn band(&self, band: Band) -> Option<&BandMetrics> {
        self.bands.iter().find(|b| b.band == band)
    }
}

fn band_metrics(frames: &[EvalFrame], band: Band, closed_top: bool, thresholds: &[f64]) -> BandMetrics {
    let filtered: Vec<EvalFrame> = frames
        .iter()
        .map(|f| EvalFrame {
            preds: f
                .preds
                .iter()
                .filter(|p| band.contains(p.bbox.ground_range(), closed_top))
                .copied()
                .collect(),
            gts: f
                .gts
                .iter()
                .filter(|g| band.contains(g.ground_range(), closed_top))
                .copied()
                .collect(),
        })
        .collect();
    let n_gt: usize = filtered.iter().map(|f| f.gts.len()).sum();
    let n_pred: usize = filtered.iter().map(|f| f.preds.len()).sum();

    let per_threshold = thresholds
        .iter()
        .map(|&t| {
            let mut ranked: Vec<(f64, bool)> = Vec::with_capacity(n_pred);
            let mut hits = 0usize;
            for f in &filtered {
                let m = greedy_match(&f.preds, &f.gts, t);
                hits += m.iter().flatten().count();
                ranked.extend(f.preds.iter().zip(&m).map(|(p, g)| (p.score, g.is_some())));
            }
            // stable: equal scores keep frame order, then within-frame order
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
            let flags: Vec<bool> = ranked.iter().map(|r| r.1).collect();
            ThresholdMetrics {
                threshold: t,
                recall: if n_gt == 0 { 1.0 } else { hits as f64 / n_gt as f64 },
                ap: ap_from_ranked(&flags, n_gt),
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for f in &filtered {
        for (p, g) in greedy_match(&f.preds, &f.gts, TP_ERROR_THRESHOLD).iter().enumerate() {
            if let Some(g) = g {
                pairs.push((f.preds[p].bbox, f.gts[*g]));
            }
        }
    }
    BandMetrics {
        band,
        n_gt,
        n_pred,
        empty_gt: n_gt == 0,
        thresholds: per_threshold,
        tp: tp_errors(&pairs),
    }
}

/// Metrics for each band of a non-overlapping partition, followed by the
/// band spanning all of them. GT and predictions are binned by their own
/// ground-plane range; matching happens within a frame.
pub fn range_band_metrics(
    frames: &[EvalFrame],
    bands: &[Band],
    thresholds: &[f64],
    meta: RunMeta,
) -> Result<MetricsReport> {
    check_thresholds(thresholds)?;
    let sorted = validate_bands(bands)?;
    let mut out: Vec<BandMetrics> = Vec::with_capacity(sorted.len() + 1);
    let top = sorted.last().map(|b| b.hi);
    for b in &sorted {
        out.push(band_metrics(frames, *b, Some(b.hi) == top, thresholds));
    }
    if let (Some(first), Some(last)) = (sorted.first(), sorted.last()) {
        if sorted.len() > 1 {
            out.push(band_metrics(frames, Band::new(first.lo, last.hi), true, thresholds));
        }
    }
    let meta = RunMeta {
        frames: frames.len(),
        n_gt: frames.iter().map(|f| f.gts.len()).sum(),
        n_pred: frames.iter().map(|f| f.preds.len()).sum(),
        ..meta
    };
    Ok(MetricsReport {
        meta,
        tp_threshold: TP_ERROR_THRESHOLD,
        bands: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn b(x: f64, y: f64) -> Box3D {
        Box3D::new(Point3::new(x, y, 0.8), [2.0, 4.0, 1.5], 0.0, 0).unwrap()
    }

    fn sb(x: f64, y: f64, score: f64) -> ScoredBox {
        ScoredBox { bbox: b(x, y), score }
    }

    #[test]
    fn exact_hit_recalls_everything() {
        let r = recall_at(&[sb(10.0, 0.0, 0.5)], &[b(10.0, 0.0)], &DEFAULT_THRESHOLDS).unwrap();
        assert!(r.iter().all(|x| x.recall == 1.0 && !x.empty_gt));
    }

    #[test]
    fn threshold_straddle() {
        let r = recall_at(&[sb(13.0, 0.0, 0.5)], &[b(10.0, 0.0)], &[2.0, 4.0]).unwrap();
        assert_eq!(r[0].recall, 0.0);
        assert_eq!(r[1].recall, 1.0);
    }

    #[test]
    fn empty_gt_is_flagged() {
        let r = recall_at(&[sb(1.0, 0.0, 0.5)], &[], &[2.0]).unwrap();
        assert!(r[0].empty_gt);
        assert_eq!(r[0].recall, 1.0);
        assert!(recall_at(&[], &[], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn ap_examples() {
        let gts = [b(0.0, 10.0), b(0.0, 20.0)];
        let all_tp = [sb(0.0, 10.0, 0.9), sb(0.0, 20.0, 0.8)];
        assert_eq!(average_precision(&all_tp, &gts, 2.0).unwrap().ap, 1.0);
        let tp_fp = [sb(0.0, 10.0, 0.9), sb(30.0, 0.0, 0.2)];
        assert_eq!(average_precision(&tp_fp, &gts[..1], 2.0).unwrap().ap, 1.0);
    }

    #[test]
    fn five_prediction_golden() {
        // ranks: TP, FP, TP, FP, TP against 3 GT
        // envelope area = 1/3 * 1 + 1/3 * 2/3 + 1/3 * 3/5 = 34/45
        let gts = [b(10.0, 0.0), b(20.0, 0.0), b(30.0, 0.0)];
        let preds = [
            sb(10.2, 0.0, 0.9),
            sb(50.0, 0.0, 0.8),
            sb(20.0, 0.5, 0.7),
            sb(60.0, 0.0, 0.6),
            sb(29.0, 0.0, 0.5),
        ];
        let ap = average_precision(&preds, &gts, 2.0).unwrap().ap;
        assert!((ap - 34.0 / 45.0).abs() < 1e-15, "{ap}");
    }

    #[test]
    fn tp_error_examples() {
        let a = b(5.0, 5.0);
        assert_eq!(
            tp_errors(&[(a, a)]).unwrap(),
            TpErrors {
                ate: 0.0,
                ase: 0.0,
                aoe: 0.0,
                count: 1
            }
        );
        let mut rot = a;
        rot.yaw = PI / 2.0;
        assert!((tp_errors(&[(rot, a)]).unwrap().aoe - PI / 2.0).abs() < 1e-15);
        let big = Box3D::new(Point3::new(0.0, 0.0, 0.0), [2.0; 3], 0.0, 0).unwrap();
        let small = Box3D::new(Point3::new(0.0, 0.0, 0.0), [1.0; 3], 0.0, 0).unwrap();
        assert_eq!(tp_errors(&[(big, small)]).unwrap().ase, 0.875);
        assert!(tp_errors(&[]).is_none());
        assert!((yaw_error(3.0, -3.0) - (TAU - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn optimal_matching_beats_greedy_when_needed() {
        let preds = [b(0.0, 1.0), b(0.0, -1.2)];
        let gts = [b(0.0, 0.0), b(0.0, 2.2)];
        let m = match_boxes(&preds, &gts).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert!(m.unmatched_gts.is_empty());
        let m = match_boxes(&preds, &[]).unwrap();
        assert_eq!(m.unmatched_preds, vec![0, 1]);
    }

    #[test]
    fn bands() {
        assert!(matches!(
            validate_bands(&[Band::new(0.0, 60.0), Band::new(50.0, 150.0)]),
            Err(Error::OverlappingBands(..))
        ));
        let frames = [EvalFrame {
            preds: vec![sb(100.0, 0.0, 0.9)],
            gts: vec![b(100.0, 0.0)],
        }];
        let rep = range_band_metrics(&frames, &default_bands(), &DEFAULT_THRESHOLDS, RunMeta::default()).unwrap();
        assert_eq!(rep.bands.len(), 3);
        let near = rep.band(NEAR_BAND).unwrap();
        assert!(near.empty_gt);
        let far = rep.band(FAR_BAND).unwrap();
        assert_eq!(far.at(2.0).unwrap().recall, 1.0);
        assert_eq!(rep.bands[2].band, Band::new(0.0, 150.0));
        assert_eq!(rep.meta.n_gt, 1);

        let near_only = [EvalFrame {
            preds: vec![],
            gts: vec![b(30.0, 0.0)],
        }];
        let rep = range_band_metrics(&near_only, &default_bands(), &DEFAULT_THRESHOLDS, RunMeta::default()).unwrap();
        assert!(rep.band(FAR_BAND).unwrap().empty_gt);
        assert_eq!(rep.band(NEAR_BAND).unwrap().at(4.0).unwrap().recall, 0.0);
    }
}
