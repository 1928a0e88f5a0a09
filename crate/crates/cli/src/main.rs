use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use far_core::check::run_checks;
use far_core::sim::{emit_run, gen_scene, run_pipeline, EmitOptions, PipelineVariant, SceneConfig, VariantKind};

const EXIT_USAGE: u8 = 1;
const EXIT_INVARIANT: u8 = 2;

#[derive(Parser)]
#[command(name = "far", version, about = "Long-range surround-view detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scene and write its report.
    Run {
        /// Scene config JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "adaptive_plus_global")]
        variant: VariantKind,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = far_core::sim::DEFAULT_GLOBAL_QUERIES)]
        n_global: usize,
        #[arg(long, default_value_t = far_core::query::DEFAULT_TAU)]
        tau: f64,
        /// Lift detections with ground-truth depth instead of the depth head.
        #[arg(long)]
        gt_depth: bool,
        #[arg(long)]
        svg: bool,
        /// Write per-frame detections.jsonl and queries.jsonl.
        #[arg(long)]
        frames: bool,
        /// Write per-frame binary feature pyramid dumps.
        #[arg(long)]
        dump_pyramid: bool,
    },
    /// Run a grid of parameter values over several seeds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "adaptive_plus_global")]
        variant: VariantKind,
        /// `name=v1,v2,...`; repeat for a grid. Names: n_global, tau,
        /// use_gt_depth, variant.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<Param>,
        /// `a..b` (end exclusive) or a comma list.
        #[arg(long, default_value = "0..10", value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone)]
struct Param {
    name: String,
    values: Vec<String>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_param(s: &str) -> Result<Param, String> {
    let (name, values) = s.split_once('=').ok_or("expected name=v1,v2,...")?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(String::is_empty) {
        return Err("empty value".into());
    }
    let base = PipelineVariant::new(VariantKind::GlobalOnly);
    for v in &values {
        apply_param(base, name, v)?;
    }
    Ok(Param {
        name: name.to_string(),
        values,
    })
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |e: std::num::ParseIntError| e.to_string();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.parse().map_err(bad)?, b.parse().map_err(bad)?);
        if a >= b {
            return Err("empty seed range".into());
        }
        return Ok(Seeds((a..b).collect()));
    }
    s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>().map(Seeds)
}

fn apply_param(v: PipelineVariant, name: &str, value: &str) -> Result<PipelineVariant, String> {
    let err = |e: &dyn std::fmt::Display| format!("{name}={value}: {e}");
    Ok(match name {
        "n_global" => PipelineVariant {
            n_global: value.parse().map_err(|e| err(&e))?,
            ..v
        },
        "tau" => {
            let tau: f64 = value.parse().map_err(|e| err(&e))?;
            if !(0.0..=1.0).contains(&tau) {
                return Err(err(&"outside [0, 1]"));
            }
            PipelineVariant { tau, ..v }
        }
        "use_gt_depth" => PipelineVariant {
            use_gt_depth: value.parse().map_err(|e| err(&e))?,
            ..v
        },
        "variant" => PipelineVariant {
            kind: value.parse().map_err(|e| err(&e))?,
            ..v
        },
        _ => return Err(format!("unknown parameter `{name}`")),
    })
}

fn load_config(path: Option<&Path>) -> Result<SceneConfig, String> {
    match path {
        None => Ok(SceneConfig::default()),
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            SceneConfig::from_json(&s).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FAR_THREADS") {
        let n: usize = v.parse().map_err(|_| format!("FAR_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            return Err("FAR_THREADS must be positive".into());
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| e.to_string())
}

/// Cartesian product of the parameter values, first parameter outermost.
fn grid(params: &[Param]) -> Vec<Vec<(String, String)>> {
    params.iter().fold(vec![vec![]], |acc, p| {
        acc.iter()
            .flat_map(|prefix| {
                p.values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push((p.name.clone(), v.clone()));
                    row
                })
            })
            .collect()
    })
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run {
            config,
            variant,
            seed,
            out,
            n_global,
            tau,
            gt_depth,
            svg,
            frames,
            dump_pyramid,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !(0.0..=1.0).contains(&tau) {
                return Err(format!("--tau {tau} outside [0, 1]"));
            }
            let v = PipelineVariant {
                kind: variant,
                n_global,
                tau,
                use_gt_depth: gt_depth,
            };
            let scene = gen_scene(&cfg).map_err(|e| e.to_string())?;
            let result = run_pipeline(&scene, &v, &cfg).map_err(|e| e.to_string())?;
            let opts = EmitOptions {
                svg,
                frames,
                pyramids: dump_pyramid,
            };
            let written = emit_run(&scene, &result, &out, opts).map_err(|e| e.to_string())?;
            for b in &result.diagnostics.coverage {
                println!(
                    "coverage {:>5}-{:<5} n_gt {:>4}  {}",
                    b.band.lo,
                    b.band.hi,
                    b.n_gt,
                    b.thresholds
                        .iter()
                        .zip(&b.recall)
                        .map(|(t, r)| format!("@{t}m {r:.3}"))
                        .collect::<Vec<_>>()
                        .join("  ")
                );
            }
            println!("wrote {} files to {}", written.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            variant,
            params,
            seeds,
            out,
        } => {
            let base_cfg = load_config(config.as_deref())?;
            let combos = grid(&params);
            let pool = thread_pool()?;
            let jobs: Vec<(usize, u64)> = (0..combos.len())
                .flat_map(|c| seeds.0.iter().map(move |&s| (c, s)))
                .collect();
            let results: Vec<Result<String, String>> = pool.install(|| {
                jobs.par_iter()
                    .map(|&(ci, seed)| {
                        let cfg = SceneConfig { seed, ..base_cfg.clone() };
                        let mut v = PipelineVariant::new(variant);
                        for (k, val) in &combos[ci] {
                            v = apply_param(v, k, val)?;
                        }
                        let scene = gen_scene(&cfg).map_err(|e| e.to_string())?;
                        let r = run_pipeline(&scene, &v, &cfg).map_err(|e| e.to_string())?;
                        let label: Vec<String> = combos[ci].iter().map(|(k, v)| format!("{k}={v}")).collect();
                        let dir = out.join(if label.is_empty() { "base".into() } else { label.join("_") }).join(format!("seed_{seed}"));
                        emit_run(&scene, &r, &dir, EmitOptions::default()).map_err(|e| e.to_string())?;
                        let mut rows = String::new();
                        for (cov, band) in r.diagnostics.coverage.iter().zip(&r.report.bands) {
                            for (ti, t) in cov.thresholds.iter().enumerate() {
                                let m = band.at(*t);
                                let _ = writeln!(
                                    rows,
                                    "{},{},{},{},{},{},{},{},{}",
                                    label.join(";"),
                                    v.kind,
                                    seed,
                                    cov.band.lo,
                                    cov.band.hi,
                                    t,
                                    cov.recall[ti],
                                    m.map_or(f64::NAN, |m| m.recall),
                                    m.map_or(f64::NAN, |m| m.ap)
                                );
                            }
                        }
                        Ok(rows)
                    })
                    .collect()
            });
            let mut csv = String::from("params,variant,seed,band_lo,band_hi,threshold,coverage,recall,ap\n");
            for r in results {
                csv += &r?;
            }
            fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            fs::write(out.join("sweep.csv"), &csv).map_err(|e| e.to_string())?;
            println!("{} runs, summary in {}", jobs.len(), out.join("sweep.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { seed } => {
            let outcomes = run_checks(seed);
            let mut failed = 0;
            for o in &outcomes {
                println!("{} {:<24} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                failed += !o.passed as usize;
            }
            if failed > 0 {
                println!("{failed} of {} invariants failed", outcomes.len());
                Ok(ExitCode::from(EXIT_INVARIANT))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("2..5").unwrap().0, vec![2, 3, 4]);
        assert_eq!(parse_seeds("7, 1").unwrap().0, vec![7, 1]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn params_parse_and_validate() {
        let p = parse_param("n_global=100,300,644").unwrap();
        assert_eq!(p.values, vec!["100", "300", "644"]);
        assert!(parse_param("n_global=abc").is_err());
        assert!(parse_param("tau=2").is_err());
        assert!(parse_param("speed=1").is_err());
        assert!(parse_param("variant=global_only,adaptive_only").is_ok());
    }

    #[test]
    fn grid_is_cartesian() {
        let g = grid(&[parse_param("n_global=1,2").unwrap(), parse_param("tau=0.1,0.2,0.3").unwrap()]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], vec![("n_global".into(), "1".into()), ("tau".into(), "0.2".into())]);
        assert_eq!(grid(&[]), vec![Vec::<(String, String)>::new()]);
    }
}
