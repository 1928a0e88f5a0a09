//! Report serialization: JSON, flat CSV, and small SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::eval::MetricsReport;
use crate::error::Result;

pub const CSV_HEADER: &str = "band_lo,band_hi,threshold,recall,ap,n_gt,n_pred,empty_gt,ate,ase,aoe";

pub fn to_json(report: &MetricsReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(s: &str) -> Result<MetricsReport> {
    Ok(serde_json::from_str(s)?)
}

/// One row per band x threshold.
pub fn to_csv(report: &MetricsReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for b in &report.bands {
        let (ate, ase, aoe) = match b.tp {
            Some(tp) => (tp.ate.to_string(), tp.ase.to_string(), tp.aoe.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        for t in &b.thresholds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                b.band.lo, b.band.hi, t.threshold, t.recall, t.ap, b.n_gt, b.n_pred, b.empty_gt, ate, ase, aoe
            );
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn svg_frame(title: &str, x_label: &str, body: &str) -> String {
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="480" height="320" font-family="sans-serif" font-size="12">
<rect width="480" height="320" fill="white"/>
<text x="240" y="20" text-anchor="middle" font-size="14">{title}</text>
<line x1="60" y1="270" x2="450" y2="270" stroke="black"/>
<line x1="60" y1="40" x2="60" y2="270" stroke="black"/>
<text x="255" y="305" text-anchor="middle">{x_label}</text>
<text x="18" y="155" text-anchor="middle" transform="rotate(-90 18 155)">recall</text>
<text x="52" y="274" text-anchor="end">0</text>
<text x="52" y="44" text-anchor="end">1</text>
{body}</svg>
"##
    )
}

fn y_of(recall: f64) -> f64 {
    270.0 - 230.0 * recall.clamp(0.0, 1.0)
}

/// Recall against distance threshold, one polyline per band.
pub fn recall_vs_threshold_svg(report: &MetricsReport) -> String {
    let t_max = report
        .bands
        .iter()
        .flat_map(|b| b.thresholds.iter().map(|t| t.threshold))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let x_of = |t: f64| 60.0 + 390.0 * t / t_max;
    let mut body = String::new();
    for (i, b) in report.bands.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = b
            .thresholds
            .iter()
            .map(|t| format!("{:.2},{:.2}", x_of(t.threshold), y_of(t.recall)))
            .collect();
        let _ = writeln!(
            body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for t in &b.thresholds {
            let _ = writeln!(
                body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x_of(t.threshold),
                y_of(t.recall)
            );
        }
        let _ = writeln!(
            body,
            r#"<text x="360" y="{}" fill="{color}">{}-{} m</text>"#,
            60 + 16 * i,
            b.band.lo,
            b.band.hi
        );
    }
    for t in report.bands.first().map(|b| b.thresholds.as_slice()).unwrap_or(&[]) {
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="285" text-anchor="middle">{}</text>"#,
            x_of(t.threshold),
            t.threshold
        );
    }
    svg_frame("Recall vs distance threshold", "threshold (m)", &body)
}

/// Recall per range band at every threshold, as grouped bars.
pub fn recall_vs_range_svg(report: &MetricsReport) -> String {
    let n_bands = report.bands.len().max(1);
    let group_w = 390.0 / n_bands as f64;
    let mut body = String::new();
    for (i, b) in report.bands.iter().enumerate() {
        let n = b.thresholds.len().max(1);
        let bar_w = 0.8 * group_w / n as f64;
        for (j, t) in b.thresholds.iter().enumerate() {
            let x = 60.0 + i as f64 * group_w + 0.1 * group_w + j as f64 * bar_w;
            let y = y_of(t.recall);
            let _ = writeln!(
                body,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} m: {:.3}</title></rect>"#,
                bar_w * 0.9,
                270.0 - y,
                PALETTE[j % PALETTE.len()],
                t.threshold,
                t.recall
            );
        }
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="285" text-anchor="middle">{}-{} m</text>"#,
            60.0 + (i as f64 + 0.5) * group_w,
            b.band.lo,
            b.band.hi
        );
    }
    svg_frame("Recall by range band", "range band", &body)
}

/// Writes `report.json` and `report.csv` into `dir`, plus the two SVG plots
/// when `svg` is set. Returns the written paths.
pub fn emit_report(report: &MetricsReport, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, contents)?;
        written.push(p);
        Ok(())
    };
    put("report.json", to_json(report)?)?;
    put("report.csv", to_csv(report))?;
    if svg {
        put("recall_vs_threshold.svg", recall_vs_threshold_svg(report))?;
        put("recall_vs_range.svg", recall_vs_range_svg(report))?;
    }
    Ok(written)
}
