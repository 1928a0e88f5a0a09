use std::fs;
use std::process::Command;

fn far() -> Command {
    Command::new(env!("CARGO_BIN_EXE_far"))
}

const SMALL: &str = r#"{
  "gt": {"count": 15},
  "frames": 2,
  "trajectory": [{"forward": 1.0, "lateral": 0.0, "yaw": 0.02}],
  "depth_bins": {"d_min": 1.0, "d_max": 153.0, "n_bins": 64, "spacing": "log_uniform"},
  "denoise": {"form": "log", "lambda": 2.0, "groups": 3, "negatives_per_group": 2}
}"#;

#[test]
fn run_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    fs::write(&cfg, SMALL).unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let st = far()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--variant", "adaptive_only", "--seed", "4", "--svg", "--frames", "--dump-pyramid", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        for f in ["report.json", "report.csv", "diagnostics.json", "recall_vs_range.svg", "frame_001/queries.jsonl", "frame_000/pyramid.bin"] {
            assert!(out.join(f).exists(), "missing {f}");
        }
        outputs.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert_eq!(report["meta"]["variant"], "adaptive_only");
    assert_eq!(report["meta"]["seed"], 4);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let st = far().args(["run", "--variant", "everything", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let st = far().args(["frobnicate"]).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"frames": 0}"#).unwrap();
    let st = far().args(["run", "--config"]).arg(&bad).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let st = far().args(["sweep", "--param", "n_global=x", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(1));
    assert_eq!(far().arg("--help").status().unwrap().code(), Some(0));
}

#[test]
fn sweep_respects_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("sweep");
    let st = far()
        .env("FAR_THREADS", "2")
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--param", "n_global=100,644", "--param", "variant=global_only,adaptive_plus_global", "--seeds", "0..2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // 4 combos x 2 seeds x 3 bands x 3 thresholds
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 3 * 3);
    assert!(out.join("n_global=644_variant=global_only/seed_1/report.json").exists());

    let st = far().env("FAR_THREADS", "zero").args(["sweep", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn check_passes() {
    let out = far().arg("check").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), far_check_count());
}

fn far_check_count() -> usize {
    8
}
