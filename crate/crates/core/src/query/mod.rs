//! Query construction: 2D proposals lifted to adaptive 3D queries, seeded
//! global anchors, and assembly of the full query set.

pub mod embed;

use std::io::{BufRead, Write};

use nalgebra::Point3;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use embed::{pos_embed, sem_embed, sinusoidal_features, EmbedParams, Mlp};

use crate::boxes::RangeBox;
use crate::depth::{expected_depth, DepthBinConfig, DepthDistribution};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Pixel};
use crate::rng::seeded;

/// Score threshold applied to 2D proposals.
pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub view: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    pub category: u32,
    pub center: [f64; 2],
    #[serde(default)]
    pub context: Vec<f64>,
}

impl Detection2D {
    pub fn new(view: usize, bbox: [f64; 4], score: f64, category: u32, context: Vec<f64>) -> Result<Self> {
        let det = Self {
            view,
            bbox,
            score,
            category,
            center: [0.5 * (bbox[0] + bbox[2]), 0.5 * (bbox[1] + bbox[3])],
            context,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        let [u0, v0, u1, v1] = self.bbox;
        if !(u0 < u1 && v0 < v1) {
            return Err(Error::InvalidConfig(format!("empty 2D box {:?}", self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidConfig(format!("score {} outside [0, 1]", self.score)));
        }
        if self.center != [0.5 * (u0 + u1), 0.5 * (v0 + v1)] {
            return Err(Error::InvalidConfig("center is not the box midpoint".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.bbox[2] - self.bbox[0]) * (self.bbox[3] - self.bbox[1])
    }

    pub fn center_pixel(&self) -> Pixel {
        Pixel::new(self.view, self.center[0], self.center[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Global,
    Adaptive,
    Propagated,
    DenoisePositive,
    DenoiseNegative,
}

impl QueryKind {
    pub fn is_denoise(self) -> bool {
        matches!(self, QueryKind::DenoisePositive | QueryKind::DenoiseNegative)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub ref_point: Point3<f64>,
    pub embedding: Vec<f64>,
    pub score: f64,
    #[serde(default)]
    pub source: Provenance,
}

/// Keeps proposals with `score >= tau`, in order.
pub fn filter_proposals(dets: &[Detection2D], tau: f64) -> Vec<Detection2D> {
    dets.iter().filter(|d| d.score >= tau).cloned().collect()
}

#[derive(Debug, Clone, Copy)]
pub enum DepthSource<'a> {
    /// Soft-decode each detection's depth distribution.
    Decoded,
    /// Ground-truth depths aligned with the detections (warm-up mode).
    GroundTruth(&'a [f64]),
}

/// Lifts thresholded detections into adaptive queries. Queries whose
/// decoded center falls outside the embedding range box are dropped.
pub fn generate_adaptive_queries(
    dets: &[Detection2D],
    depths: &[DepthDistribution],
    rig: &CameraRig,
    cfg: &DepthBinConfig,
    params: &EmbedParams,
    tau: f64,
    source: DepthSource<'_>,
) -> Result<Vec<Query>> {
    if depths.len() != dets.len() {
        return Err(Error::Misaligned(format!(
            "{} detections but {} depth distributions",
            dets.len(),
            depths.len()
        )));
    }
    if let DepthSource::GroundTruth(gt) = source {
        if gt.len() != dets.len() {
            return Err(Error::Misaligned(format!(
                "{} detections but {} ground-truth depths",
                dets.len(),
                gt.len()
            )));
        }
    }
    let mut out = Vec::new();
    for (i, det) in dets.iter().enumerate() {
        if det.score < tau {
            continue;
        }
        let depth = match source {
            DepthSource::Decoded => expected_depth(&depths[i], cfg)?,
            DepthSource::GroundTruth(gt) => gt[i],
        };
        let c3d = rig.unproject_pixel(det.center_pixel(), depth)?;
        if !params.bounds.contains(&c3d) {
            continue;
        }
        let pos = pos_embed(&c3d, params);
        let sem = sem_embed(&det.context, det.score, params)?;
        out.push(Query {
            kind: QueryKind::Adaptive,
            ref_point: c3d,
            embedding: (pos + sem).as_slice().to_vec(),
            score: det.score,
            source: Provenance {
                view: Some(det.view),
                detection: Some(i),
                category: Some(det.category),
                ..Provenance::default()
            },
        });
    }
    Ok(out)
}

/// `n` anchors drawn uniformly over `range` from `seed`.
pub fn make_global_queries(n: usize, seed: u64, params: &EmbedParams, range: &RangeBox) -> Vec<Query> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let p = Point3::new(
                rng.random_range(range.min[0]..range.max[0]),
                rng.random_range(range.min[1]..range.max[1]),
                rng.random_range(range.min[2]..range.max[2]),
            );
            Query {
                kind: QueryKind::Global,
                ref_point: p,
                embedding: pos_embed(&p, params).as_slice().to_vec(),
                score: 0.0,
                source: Provenance::default(),
            }
        })
        .collect()
}

/// Concatenates global, adaptive and propagated queries in that order.
pub fn assemble_query_set(global: &[Query], adaptive: &[Query], propagated: &[Query]) -> Result<Vec<Query>> {
    let all = global.iter().chain(adaptive).chain(propagated);
    let mut dim = None;
    for q in all.clone() {
        match dim {
            None => dim = Some(q.embedding.len()),
            Some(d) if d != q.embedding.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: q.embedding.len(),
                })
            }
            _ => {}
        }
    }
    Ok(all.cloned().collect())
}

pub fn write_json_lines<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_json_lines<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
