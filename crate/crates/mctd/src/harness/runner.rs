//! Experiment execution and trace persistence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::domain::{make_benchmark, TraceRecord};
use crate::harness::baselines::{nelder_mead_run, random_search_run, turbo_baseline_run};
use crate::harness::config::RunConfig;
use crate::tree::mctd_run;
use crate::{Error, Result, Rng};

/// One seed's trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub version: String,
    pub config: RunConfig,
    /// Wall time per seed, in seconds.
    pub wall_times_s: BTreeMap<u64, f64>,
}

/// Default output root: `$MCTD_OUT_DIR`, else `./runs`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("MCTD_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("trace_seed{seed}.csv"))
}

/// Serialize one trace to the CSV schema
/// `eval_index,x_0..x_{d-1},y,best_y,node`.
pub fn trace_to_csv(records: &[TraceRecord], dim: usize) -> String {
    let mut out = String::from("eval_index");
    for i in 0..dim {
        out.push_str(&format!(",x_{i}"));
    }
    out.push_str(",y,best_y,node\n");
    for r in records {
        out.push_str(&r.index.to_string());
        for v in &r.x {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{},{},{}\n", r.y, r.best_y, r.node));
    }
    out
}

pub fn trace_from_csv(text: &str, path: &Path) -> Result<Vec<TraceRecord>> {
    let bad = |line: usize, msg: &str| {
        Error::Config(format!("{} line {}: {msg}", path.display(), line + 1))
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(0, "empty trace file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "eval_index" || cols[cols.len() - 1] != "node" {
        return Err(bad(0, "unrecognized trace header"));
    }
    let dim = cols.len() - 4;
    let mut records = Vec::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != dim + 4 {
            return Err(bad(ln, "wrong field count"));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad number"));
        records.push(TraceRecord {
            index: f[0].parse().map_err(|_| bad(ln, "bad index"))?,
            x: f[1..1 + dim].iter().map(|s| parse(s)).collect::<Result<_>>()?,
            y: parse(f[1 + dim])?,
            best_y: parse(f[2 + dim])?,
            node: f[3 + dim].to_string(),
        });
    }
    Ok(records)
}

/// Run one seed of the configured algorithm.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<RunTrace> {
    let mut obj = make_benchmark(&cfg.benchmark, cfg.dim)?;
    let mut rng = Rng::seed_from_u64(seed);
    let records = match cfg.algorithm.as_str() {
        "mctd" => mctd_run(&mut obj, cfg.mctd_config()?, cfg.max_evals, &mut rng)?,
        "random" => random_search_run(&mut obj, cfg.max_evals, &mut rng)?,
        "nelder-mead" => nelder_mead_run(&mut obj, cfg.max_evals, &mut rng)?,
        "turbo" => turbo_baseline_run(&mut obj, cfg.max_evals, &mut rng)?,
        other => return Err(Error::UnknownAlgorithm(other.to_string())),
    };
    Ok(RunTrace { seed, records })
}

/// Execute every seed, persist one CSV per seed plus `manifest.json`.
/// Returns the output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone().unwrap_or_else(default_out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut wall_times = BTreeMap::new();
    for &seed in &cfg.seeds {
        let start = Instant::now();
        let trace = run_seed(cfg, seed)?;
        wall_times.insert(seed, start.elapsed().as_secs_f64());
        let path = trace_path(&dir, seed);
        std::fs::write(&path, trace_to_csv(&trace.records, cfg.dim))
            .map_err(|e| Error::io(&path, e))?;
    }

    let manifest = Manifest {
        fingerprint: cfg.fingerprint(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        wall_times_s: wall_times,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

/// Read a run directory back: manifest plus every `trace_seed*.csv`.
pub fn load_run_dir(dir: &Path) -> Result<(Manifest, Vec<RunTrace>)> {
    let mpath = dir.join("manifest.json");
    let mtext = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&mtext)
        .map_err(|e| Error::Config(format!("{}: {e}", mpath.display())))?;
    let mut traces = Vec::new();
    for &seed in &manifest.config.seeds {
        let tpath = trace_path(dir, seed);
        let text = std::fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
        traces.push(RunTrace {
            seed,
            records: trace_from_csv(&text, &tpath)?,
        });
    }
    Ok((manifest, traces))
}
