//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; errors surface as JS exceptions.

use nalgebra::Point3;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use far_core::boxes::Box3D;
use far_core::denoise::{make_noise_groups, negative_magnitude, NoiseForm, NoiseSpec};
use far_core::depth::DepthBinConfig;
use far_core::geometry::{CameraRig, Pixel};
use far_core::metrics::{Band, FAR_BAND, NEAR_BAND};
use far_core::query::EmbedParams;
use far_core::sim::{gen_scene, run_pipeline, PipelineVariant, SceneConfig, VariantKind};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

#[derive(Serialize)]
pub struct ErrorPoint {
    pub depth: f64,
    pub lateral: f64,
    pub bin_width: f64,
}

/// Lateral displacement caused by a `pixel_error` shift of the front camera's
/// principal point, plus the local log-bin width, for depths in `[1, d_max]`.
pub fn error_curve(pixel_error: f64, d_max: f64, samples: usize) -> far_core::Result<Vec<ErrorPoint>> {
    let rig = CameraRig::default_ring();
    let k = rig.camera(0)?.intrinsics;
    let bins = DepthBinConfig::default();
    let a = Pixel::new(0, k.cx, k.cy);
    let b = Pixel::new(0, k.cx + pixel_error, k.cy);
    (0..samples)
        .map(|i| {
            let depth = 1.0 + (d_max - 1.0) * i as f64 / (samples.max(2) - 1) as f64;
            let lateral = (rig.unproject_pixel(b, depth)? - rig.unproject_pixel(a, depth)?).norm();
            let bin_width = bins.local_bin_width(depth.clamp(bins.d_min, bins.d_max));
            Ok(ErrorPoint { depth, lateral, bin_width })
        })
        .collect()
}

#[wasm_bindgen(js_name = errorCurve)]
pub fn error_curve_js(pixel_error: f64, d_max: f64, samples: usize) -> Result<String, JsError> {
    to_json(&error_curve(pixel_error, d_max, samples).map_err(js_err)?)
}

#[derive(Serialize)]
pub struct DenoiseView {
    pub corners: Vec<[f64; 2]>,
    pub positives: Vec<[f64; 2]>,
    pub negatives: Vec<[f64; 2]>,
    pub negative_radius: f64,
}

pub fn parse_form(form: &str) -> far_core::Result<NoiseForm> {
    serde_json::from_value(serde_json::Value::String(form.into())).map_err(far_core::Error::from)
}

/// Denoising samples for one car-sized box at `(x, y)` in BEV.
pub fn denoise_samples(x: f64, y: f64, yaw: f64, form: &str, groups: usize, seed: u64) -> far_core::Result<DenoiseView> {
    let spec = NoiseSpec {
        form: parse_form(form)?,
        groups,
        ..NoiseSpec::default()
    };
    let gt = Box3D::new(Point3::new(x, y, 0.85), [1.9, 4.6, 1.7], yaw, 0)?;
    let params = EmbedParams::random(8, 2, 0, 8, Default::default(), 0);
    let ng = make_noise_groups(&[gt], &spec, &params, seed)?;
    let xy = |p: &Point3<f64>| [p.x, p.y];
    Ok(DenoiseView {
        corners: gt.corners()[..4].iter().map(xy).collect(),
        positives: ng.groups.iter().map(|g| xy(&g.positive.ref_point)).collect(),
        negatives: ng.groups.iter().flat_map(|g| g.negatives.iter().map(|q| xy(&q.ref_point))).collect(),
        negative_radius: negative_magnitude(&gt.center, &spec),
    })
}

#[wasm_bindgen(js_name = denoiseSamples)]
pub fn denoise_samples_js(x: f64, y: f64, yaw: f64, form: &str, groups: usize, seed: u32) -> Result<String, JsError> {
    to_json(&denoise_samples(x, y, yaw, form, groups, seed.into()).map_err(js_err)?)
}

#[derive(Serialize)]
pub struct VariantCoverage {
    pub variant: &'static str,
    pub near: f64,
    pub far: f64,
    pub recall_2d_far: f64,
}

/// Query coverage at 2 m for each pipeline variant on one simulated scene.
pub fn coverage(seed: u64, n_global: usize, objects: usize) -> far_core::Result<Vec<VariantCoverage>> {
    let mut cfg = SceneConfig { seed, ..SceneConfig::default() };
    cfg.gt.count = objects;
    let scene = gen_scene(&cfg)?;
    VariantKind::ALL
        .iter()
        .map(|&kind| {
            let out = run_pipeline(&scene, &PipelineVariant::new(kind).with_globals(n_global), &cfg)?;
            let d = &out.diagnostics;
            let at = |b: Band| d.coverage(b).and_then(|c| c.at(2.0)).unwrap_or(f64::NAN);
            Ok(VariantCoverage {
                variant: kind.name(),
                near: at(NEAR_BAND),
                far: at(FAR_BAND),
                recall_2d_far: d.recall_2d(FAR_BAND).map_or(f64::NAN, |r| r.recall),
            })
        })
        .collect()
}

#[wasm_bindgen(js_name = coverage)]
pub fn coverage_js(seed: u32, n_global: usize, objects: usize) -> Result<String, JsError> {
    to_json(&coverage(seed.into(), n_global, objects).map_err(js_err)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lateral_error_grows_linearly() {
        let c = error_curve(1.0, 151.0, 4).unwrap();
        assert_eq!(c.len(), 4);
        assert!((c[3].lateral / c[1].lateral - c[3].depth / c[1].depth).abs() < 1e-9);
    }

    #[test]
    fn denoise_view_counts() {
        let v = denoise_samples(40.0, 10.0, 0.3, "log", 3, 1).unwrap();
        assert_eq!(v.positives.len(), 3);
        assert_eq!(v.negatives.len(), 6);
        assert!(parse_form("cubic").is_err());
    }

    #[test]
    fn coverage_has_every_variant() {
        let c = coverage(0, 100, 20).unwrap();
        assert_eq!(c.len(), VariantKind::ALL.len());
        assert!(c.iter().all(|v| (0.0..=1.0).contains(&v.far)));
    }
}
