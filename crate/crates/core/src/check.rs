//! Quick invariant suite behind `far check`.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::Serialize;

use crate::aggregation::{bilinear_sample, bilinear_sample_grad, collect_samples, aggregate_at, FeatureGrid, FeaturePyramid, SamplePlan};
use crate::boxes::Box3D;
use crate::denoise::{make_noise_groups, NoiseSpec};
use crate::depth::{expected_depth, DepthBinConfig};
use crate::error::Result;
use crate::geometry::{CameraRig, Pixel};
use crate::metrics::report::to_json;
use crate::metrics::{average_precision, hungarian, ScoredBox};
use crate::query::EmbedParams;
use crate::rng::{derive, seeded, SimRng};
use crate::sim::{gen_scene, run_pipeline, PipelineVariant, SceneConfig, VariantKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(&mut SimRng) -> Result<std::result::Result<String, String>>;

const CHECKS: [(&str, CheckFn); 8] = [
    ("projection_round_trip", round_trip),
    ("depth_bins", depth_bins),
    ("sampling_gradients", sampling_gradients),
    ("aggregation_convexity", aggregation_convexity),
    ("denoise_groups", denoise_groups),
    ("hungarian_optimality", hungarian_optimality),
    ("ap_golden", ap_golden),
    ("run_determinism", run_determinism),
];

pub fn check_names() -> impl Iterator<Item = &'static str> {
    CHECKS.iter().map(|c| c.0)
}

/// Runs every check; an internal error counts as a failure.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut rng = seeded(derive(seed, i as u64));
            let (passed, detail) = match f(&mut rng) {
                Ok(Ok(d)) => (true, d),
                Ok(Err(d)) => (false, d),
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome { name, passed, detail }
        })
        .collect()
}

fn verdict(ok: bool, detail: String) -> Result<std::result::Result<String, String>> {
    Ok(if ok { Ok(detail) } else { Err(detail) })
}

fn round_trip(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    let rig = CameraRig::default_ring();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let view = rng.random_range(0..rig.len());
        let k = rig.cameras()[view].intrinsics;
        let pix = Pixel::new(view, rng.random_range(0.0..k.width as f64), rng.random_range(0.0..k.height as f64));
        let depth = rng.random_range(1.0..150.0);
        let p = rig.unproject_pixel(pix, depth)?;
        let (back, d) = rig.project_point(&p, view)?.in_front().expect("unprojected point is in front");
        let err = ((back.u - pix.u).hypot(back.v - pix.v) / pix.u.hypot(pix.v).max(1.0)).max((d - depth).abs() / depth);
        worst = worst.max(err);
    }
    verdict(worst <= 1e-9, format!("max relative error {worst:.3e}"))
}

fn depth_bins(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    let cfg = DepthBinConfig::default();
    let edges = cfg.edges();
    let centers = cfg.centers();
    let span = centers[0]..=centers[centers.len() - 1];
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let d = rng.random_range(cfg.d_min..cfg.d_max);
        let b = cfg.depth_to_bin(d)?;
        let inside = (edges[b] < d || b == 0) && d <= edges[b + 1];
        if !inside {
            return verdict(false, format!("depth {d} outside bin {b}"));
        }
        if span.contains(&d) {
            worst = worst.max((expected_depth(&cfg.soft_label(d)?, &cfg)? - d).abs());
        }
    }
    verdict(worst <= 1e-9, format!("soft label decode error {worst:.3e}"))
}

fn random_grid(rng: &mut SimRng, channels: usize) -> Result<FeatureGrid> {
    let h = rng.random_range(2..12);
    let w = rng.random_range(2..12);
    let stride = [4.0, 8.0, 16.0][rng.random_range(0..3)];
    let data = (0..h * w * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureGrid::new(h, w, channels, stride, data)
}

fn sampling_gradients(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g = random_grid(rng, 3)?;
        let s = g.stride();
        // interior of a cell so the central difference never crosses a knot
        let gx = rng.random_range(0..g.width() - 1) as f64 + rng.random_range(0.01..0.99);
        let gy = rng.random_range(0..g.height() - 1) as f64 + rng.random_range(0.01..0.99);
        let (u, v) = ((gx + 0.5) * s, (gy + 0.5) * s);
        let (du, dv) = bilinear_sample_grad(&g, u, v)?;
        let f = |u, v| bilinear_sample(&g, u, v).value;
        let (up, um, vp, vm) = (f(u + H, v), f(u - H, v), f(u, v + H), f(u, v - H));
        for k in 0..3 {
            worst = worst.max(((up[k] - um[k]) / (2.0 * H) - du[k]).abs());
            worst = worst.max(((vp[k] - vm[k]) / (2.0 * H) - dv[k]).abs());
        }
    }
    verdict(worst <= 1e-6, format!("max gradient error {worst:.3e}"))
}

fn aggregation_convexity(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    let rig = CameraRig::default_ring();
    let views = rig
        .cameras()
        .iter()
        .map(|c| {
            [16.0, 32.0]
                .iter()
                .map(|&s| {
                    let (h, w) = ((c.intrinsics.height as f64 / s) as usize, (c.intrinsics.width as f64 / s) as usize);
                    let data = (0..h * w * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
                    FeatureGrid::new(h, w, 4, s, data)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pyr = FeaturePyramid::new(views)?;
    for _ in 0..1000 {
        let m = rng.random_range(1..6);
        let offsets = (0..m)
            .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut plan = SamplePlan::uniform(offsets, pyr.num_views(), pyr.num_levels());
        for w in &mut plan.weights {
            *w = rng.random_range(-4.0..4.0);
        }
        let p = Point3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(-1.0..3.0));
        let samples = collect_samples(&p, &plan, &pyr, &rig)?;
        let agg = aggregate_at(&p, &plan, &pyr, &rig)?;
        for c in 0..pyr.channels() {
            let lo = samples.iter().map(|s| s.value[c]).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s.value[c]).fold(f64::NEG_INFINITY, f64::max);
            let x = agg.value[c];
            if !samples.is_empty() && !(x >= lo - 1e-12 && x <= hi + 1e-12) {
                return verdict(false, format!("channel {c}: {x} outside [{lo}, {hi}]"));
            }
        }
    }
    verdict(true, "1000 plans inside their sample hull".into())
}

fn denoise_groups(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    let spec = NoiseSpec::default();
    let params = EmbedParams::random(8, 2, 0, 8, Default::default(), 1);
    let gts: Vec<Box3D> = (0..50)
        .map(|_| {
            Box3D::new(
                Point3::new(rng.random_range(-70.0..70.0), rng.random_range(-70.0..70.0), 0.8),
                [rng.random_range(0.5..3.0), rng.random_range(0.5..10.0), rng.random_range(1.0..4.0)],
                rng.random_range(-3.0..3.0),
                0,
            )
        })
        .collect::<Result<_>>()?;
    let groups = make_noise_groups(&gts, &spec, &params, rng.random())?;
    if groups.len() != gts.len() * spec.queries_per_gt() {
        return verdict(false, format!("{} denoise queries for {} GT", groups.len(), gts.len()));
    }
    let outside = groups
        .groups
        .iter()
        .filter(|g| !gts[g.gt_index].contains(&g.positive.ref_point))
        .count();
    verdict(outside == 0, format!("{outside} positives outside their box"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn hungarian_optimality(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let got = hungarian(&cost)?.total_cost;
        if (got - best).abs() > 1e-9 {
            return verdict(false, format!("n={n}: assignment cost {got} vs optimum {best}"));
        }
    }
    verdict(true, "200 instances optimal".into())
}

fn ap_golden(_: &mut SimRng) -> Result<std::result::Result<String, String>> {
    let b = |x: f64, y: f64| Box3D::new(Point3::new(x, y, 0.8), [2.0, 4.5, 1.6], 0.0, 0);
    let gts = vec![b(10.0, 0.0)?, b(20.0, 0.0)?, b(30.0, 0.0)?];
    let preds = [(10.2, 0.0, 0.9), (50.0, 0.0, 0.8), (20.0, 0.5, 0.7), (60.0, 0.0, 0.6), (29.0, 0.0, 0.5)]
        .iter()
        .map(|&(x, y, score)| Ok(ScoredBox { bbox: b(x, y)?, score }))
        .collect::<Result<Vec<_>>>()?;
    let ap = average_precision(&preds, &gts, 2.0)?.ap;
    verdict((ap - 34.0 / 45.0).abs() < 1e-12, format!("AP {ap}"))
}

fn run_determinism(rng: &mut SimRng) -> Result<std::result::Result<String, String>> {
    let mut cfg = SceneConfig {
        seed: rng.random(),
        frames: 2,
        trajectory: vec![Default::default()],
        ..SceneConfig::default()
    };
    cfg.gt.count = 20;
    let v = PipelineVariant::new(VariantKind::AdaptivePlusGlobal).with_globals(100);
    let a = to_json(&run_pipeline(&gen_scene(&cfg)?, &v, &cfg)?.report)?;
    let b = to_json(&run_pipeline(&gen_scene(&cfg)?, &v, &cfg)?.report)?;
    verdict(a == b, format!("{} byte report", a.len()))
}
