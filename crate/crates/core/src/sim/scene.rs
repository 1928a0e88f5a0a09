use std::f64::consts::TAU;

use nalgebra::Point3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::config::SceneConfig;
use crate::aggregation::{FeatureGrid, FeaturePyramid};
use crate::boxes::{ground_range, Box3D, RangeBox};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Intrinsics, Projection};
use crate::rng::{derive, seeded, SimRng};
use crate::temporal::EgoMotion;

const TAG_WORLD: u64 = 1;
const TAG_FIELD: u64 = 2;

/// Rejection-sampling attempts per object before the band is declared empty.
const MAX_PLACEMENT_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub gts: Vec<Box3D>,
    pub pyramid: FeaturePyramid,
    /// Maps points of the previous frame into this one (identity for frame 0).
    pub motion: EgoMotion,
    /// Maps points of frame 0 into this frame.
    pub from_first: EgoMotion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rig: CameraRig,
    /// Objects in the frame-0 ego frame.
    pub world: Vec<Box3D>,
    /// Band of `cfg.gt.bands` each world object was drawn from.
    pub world_band: Vec<usize>,
    pub frames: Vec<SceneFrame>,
}

/// Tight pixel box around the projected corners, before clipping. `None`
/// when any corner is behind the camera.
pub fn project_box(rig: &CameraRig, b: &Box3D, view: usize) -> Result<Option<[f64; 4]>> {
    let mut out = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in b.corners() {
        let Projection::InFront { pixel, .. } = rig.project_point(&c, view)? else {
            return Ok(None);
        };
        out[0] = out[0].min(pixel.u);
        out[1] = out[1].min(pixel.v);
        out[2] = out[2].max(pixel.u);
        out[3] = out[3].max(pixel.v);
    }
    Ok(Some(out))
}

/// Intersection with the image rectangle; `None` when empty.
pub fn clip_box(b: [f64; 4], k: &Intrinsics) -> Option<[f64; 4]> {
    let c = [
        b[0].max(0.0),
        b[1].max(0.0),
        b[2].min(k.width as f64),
        b[3].min(k.height as f64),
    ];
    (c[0] < c[2] && c[1] < c[3]).then_some(c)
}

pub fn box_area(b: &[f64; 4]) -> f64 {
    (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0)
}

pub fn iou_2d(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let inter = box_area(&[a[0].max(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].min(b[3])]);
    let union = box_area(a) + box_area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn compose(second: &EgoMotion, first: &EgoMotion) -> EgoMotion {
    EgoMotion {
        rotation: second.rotation * first.rotation,
        translation: second.rotation * first.translation + second.translation,
    }
}

fn transform_box(b: &Box3D, m: &EgoMotion) -> Result<Box3D> {
    let c = Point3::from(m.rotation * b.center.coords + m.translation);
    let dyaw = m.rotation[(1, 0)].atan2(m.rotation[(0, 0)]);
    Box3D::new(c, b.size, b.yaw + dyaw, b.category)
}

fn place_in_band<R: Rng>(rng: &mut R, lo: f64, hi: f64, range: &RangeBox) -> Option<(f64, f64)> {
    // area-uniform over the annulus, rejected outside the range box
    for _ in 0..MAX_PLACEMENT_TRIES {
        let r = (lo * lo + rng.random::<f64>() * (hi * hi - lo * lo)).sqrt();
        let a = rng.random::<f64>() * TAU;
        let (x, y) = (r * a.cos(), r * a.sin());
        if range.min[0] <= x && x <= range.max[0] && range.min[1] <= y && y <= range.max[1] {
            return Some((x, y));
        }
    }
    None
}

fn sample_world(cfg: &SceneConfig, seed: u64) -> Result<(Vec<Box3D>, Vec<usize>)> {
    let gt = &cfg.gt;
    if gt.count == 0 {
        return Ok((vec![], vec![]));
    }
    let mut rng = seeded(derive(seed, TAG_WORLD));
    let band_pick = WeightedIndex::new(gt.bands.iter().map(|b| b.weight))
        .map_err(|e| Error::InvalidConfig(format!("band weights: {e}")))?;
    let tmpl_pick = WeightedIndex::new(cfg.templates.iter().map(|t| t.weight))
        .map_err(|e| Error::InvalidConfig(format!("template weights: {e}")))?;
    let mut boxes = Vec::with_capacity(gt.count);
    let mut bands = Vec::with_capacity(gt.count);
    for _ in 0..gt.count {
        let bi = band_pick.sample(&mut rng);
        let band = gt.bands[bi];
        let lo = band.lo.max(gt.min_range);
        if lo >= band.hi {
            return Err(Error::InvalidConfig(format!(
                "band {}-{} lies inside min_range {}",
                band.lo, band.hi, gt.min_range
            )));
        }
        let (x, y) = place_in_band(&mut rng, lo, band.hi, &cfg.range).ok_or_else(|| {
            Error::InvalidConfig(format!("band {}-{} misses the range box", band.lo, band.hi))
        })?;
        let t = cfg.templates[tmpl_pick.sample(&mut rng)];
        let size = t.size.map(|s| s * (1.0 + t.jitter * (2.0 * rng.random::<f64>() - 1.0)));
        let yaw = rng.random::<f64>() * TAU;
        // resting on the ground plane z = 0
        boxes.push(Box3D::new(Point3::new(x, y, 0.5 * size[2]), size, yaw, t.category)?);
        bands.push(bi);
    }
    Ok((boxes, bands))
}

/// `channels` sums of separable waves per view, evaluated at cell centers.
struct BackgroundField {
    waves: Vec<Vec<Wave>>,
}

/// `(amplitude, fu, phase_u, fv, phase_v)`
type Wave = (f64, f64, f64, f64, f64);

const WAVES_PER_CHANNEL: usize = 3;

impl BackgroundField {
    fn random(rng: &mut SimRng, channels: usize, amplitude: f64, k: &Intrinsics) -> Self {
        let waves = (0..channels)
            .map(|_| {
                (0..WAVES_PER_CHANNEL)
                    .map(|_| {
                        (
                            amplitude / WAVES_PER_CHANNEL as f64,
                            TAU * rng.random_range(0.5..3.0) / k.width as f64,
                            rng.random::<f64>() * TAU,
                            TAU * rng.random_range(0.5..3.0) / k.height as f64,
                            rng.random::<f64>() * TAU,
                        )
                    })
                    .collect()
            })
            .collect();
        Self { waves }
    }

    fn grid(&self, k: &Intrinsics, stride: f64) -> Result<FeatureGrid> {
        let h = ((k.height as f64 / stride) as usize).max(1);
        let w = ((k.width as f64 / stride) as usize).max(1);
        let c = self.waves.len();
        // separable: precompute per-row and per-column factors
        let mut col_f = vec![0.0; w * c * WAVES_PER_CHANNEL];
        let mut row_f = vec![0.0; h * c * WAVES_PER_CHANNEL];
        for (ch, waves) in self.waves.iter().enumerate() {
            for (i, &(a, fu, pu, fv, pv)) in waves.iter().enumerate() {
                for col in 0..w {
                    let u = (col as f64 + 0.5) * stride;
                    col_f[(col * c + ch) * WAVES_PER_CHANNEL + i] = a * (fu * u + pu).sin();
                }
                for row in 0..h {
                    let v = (row as f64 + 0.5) * stride;
                    row_f[(row * c + ch) * WAVES_PER_CHANNEL + i] = (fv * v + pv).cos();
                }
            }
        }
        FeatureGrid::from_fn(h, w, c, stride, |row, col, ch| {
            (0..WAVES_PER_CHANNEL)
                .map(|i| {
                    col_f[(col * c + ch) * WAVES_PER_CHANNEL + i] * row_f[(row * c + ch) * WAVES_PER_CHANNEL + i]
                })
                .sum()
        })
    }
}

/// Non-negative per-channel pattern marking objects of one category.
pub fn category_signature(category: u32, channels: usize) -> Vec<f64> {
    (0..channels)
        .map(|ch| 0.6 + 0.4 * (ch as f64 * 1.3 + category as f64 * 2.1).cos())
        .collect()
}

fn add_bump(grid: &mut FeatureGrid, u: f64, v: f64, sigma_px: f64, amp: f64, sig: &[f64]) {
    let s = grid.stride();
    let (gx, gy) = grid.to_grid(u, v);
    let sg = sigma_px / s;
    let reach = (3.0 * sg).ceil() as i64 + 1;
    let (h, w) = (grid.height() as i64, grid.width() as i64);
    let (cx, cy) = (gx.round() as i64, gy.round() as i64);
    for row in (cy - reach).max(0)..(cy + reach + 1).min(h) {
        for col in (cx - reach).max(0)..(cx + reach + 1).min(w) {
            let d2 = (col as f64 - gx).powi(2) + (row as f64 - gy).powi(2);
            let g = amp * (-0.5 * d2 / (sg * sg)).exp();
            for (x, k) in grid.cell_mut(row as usize, col as usize).iter_mut().zip(sig) {
                *x += g * k;
            }
        }
    }
}

fn frame_pyramid(cfg: &SceneConfig, rig: &CameraRig, gts: &[Box3D], seed: u64, frame: usize) -> Result<FeaturePyramid> {
    let f = &cfg.features;
    let mut views = Vec::with_capacity(rig.len());
    for (v, cam) in rig.cameras().iter().enumerate() {
        let k = &cam.intrinsics;
        let mut rng = seeded(derive(derive(seed, TAG_FIELD), (frame * rig.len() + v) as u64));
        let field = BackgroundField::random(&mut rng, f.channels, f.field_amplitude, k);
        let mut levels = f
            .strides
            .iter()
            .map(|&s| field.grid(k, s))
            .collect::<Result<Vec<_>>>()?;
        for b in gts {
            let Some(pb) = project_box(rig, b, v)? else {
                continue;
            };
            let Projection::InFront { pixel, .. } = rig.project_point(&b.center, v)? else {
                continue;
            };
            if clip_box(pb, k).is_none() {
                continue;
            }
            let sigma = 0.35 * (pb[2] - pb[0]).max(pb[3] - pb[1]);
            let sig = category_signature(b.category, f.channels);
            for grid in &mut levels {
                let sg = sigma.max(0.5 * grid.stride());
                add_bump(grid, pixel.u, pixel.v, sg, f.bump_amplitude, &sig);
            }
        }
        views.push(levels);
    }
    FeaturePyramid::new(views)
}

/// Draws the world once, then moves it into each frame along the trajectory.
/// A frame's GT set is every object whose center lies inside the range box.
pub fn gen_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let rig = cfg.rig()?;
    let (world, world_band) = sample_world(cfg, cfg.seed)?;
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut from_first = EgoMotion::identity();
    for fi in 0..cfg.frames {
        let motion = if fi == 0 || cfg.trajectory.is_empty() {
            EgoMotion::identity()
        } else {
            let s = cfg.trajectory[fi - 1];
            EgoMotion::from_ego_step(s.forward, s.lateral, s.yaw)
        };
        from_first = compose(&motion, &from_first);
        let mut gts = Vec::new();
        for b in &world {
            let moved = transform_box(b, &from_first)?;
            if cfg.range.contains(&moved.center) {
                gts.push(moved);
            }
        }
        let pyramid = frame_pyramid(cfg, &rig, &gts, cfg.seed, fi)?;
        frames.push(SceneFrame {
            gts,
            pyramid,
            motion,
            from_first,
        });
    }
    Ok(Scene {
        rig,
        world,
        world_band,
        frames,
    })
}

/// Ground range of a world object's center.
pub fn object_range(b: &Box3D) -> f64 {
    ground_range(&b.center)
}
