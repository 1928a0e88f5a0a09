//! Synthetic scenes, a simulated 2D detector, and the end-to-end runner
//! that turns them into reports.

pub mod config;
pub mod detector;
pub mod pipeline;
pub mod scene;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub use config::{DetectorNoise, SceneConfig};
pub use detector::{recall_2d, simulate_2d_detector, FrameDetections};
pub use pipeline::{
    query_coverage, report_bands, run_pipeline, CoverageBand, Diagnostics, PipelineOutput, PipelineVariant,
    VariantKind, DEFAULT_GLOBAL_QUERIES,
};
pub use scene::{gen_scene, Scene};

use crate::aggregation::dump::write_pyramid;
use crate::error::Result;
use crate::metrics::emit_report;
use crate::query::write_json_lines;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitOptions {
    pub svg: bool,
    /// Per-frame `detections.jsonl` and `queries.jsonl`.
    pub frames: bool,
    /// Per-frame binary pyramid dumps.
    pub pyramids: bool,
}

/// Writes the report files plus `diagnostics.json`, and per-frame artifacts
/// under `frame_NNN/` as requested.
pub fn emit_run(scene: &Scene, out: &PipelineOutput, dir: &Path, opts: EmitOptions) -> Result<Vec<PathBuf>> {
    let mut written = emit_report(&out.report, dir, opts.svg)?;
    let diag = dir.join("diagnostics.json");
    let mut s = serde_json::to_string_pretty(&out.diagnostics)?;
    s.push('\n');
    fs::write(&diag, s)?;
    written.push(diag);
    if !(opts.frames || opts.pyramids) {
        return Ok(written);
    }
    for (fi, frame) in scene.frames.iter().enumerate() {
        let fdir = dir.join(format!("frame_{fi:03}"));
        fs::create_dir_all(&fdir)?;
        if opts.frames {
            let p = fdir.join("detections.jsonl");
            write_json_lines(&out.detections[fi].detections, BufWriter::new(File::create(&p)?))?;
            written.push(p);
            let p = fdir.join("queries.jsonl");
            write_json_lines(&out.queries[fi], BufWriter::new(File::create(&p)?))?;
            written.push(p);
        }
        if opts.pyramids {
            let p = fdir.join("pyramid.bin");
            write_pyramid(&frame.pyramid, BufWriter::new(File::create(&p)?))?;
            written.push(p);
        }
    }
    Ok(written)
}
