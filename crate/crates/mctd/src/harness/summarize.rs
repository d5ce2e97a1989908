//! Multi-seed aggregation: summary rows and convergence-curve data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::runner::{load_run_dir, Manifest, RunTrace};
use crate::{Error, Result};

/// Aggregate of one algorithm's traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryTable {
    pub algorithm: String,
    pub benchmark: String,
    pub dim: usize,
    pub seeds: usize,
    /// Best value found across all seeds.
    pub best: f64,
    /// Earliest evaluation index (in its seed) attaining `best`.
    pub earliest: usize,
    /// Mean of final running bests across seeds.
    pub mean: f64,
    /// Standard deviation of final running bests across seeds.
    pub std: f64,
    /// Per-index (mean, std) of the running best across seeds, truncated to
    /// the shortest trace.
    pub curve: Vec<(f64, f64)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate traces into a summary row plus curve data.
pub fn summarize(manifest: &Manifest, traces: &[RunTrace]) -> Result<SummaryTable> {
    if traces.is_empty() || traces.iter().any(|t| t.records.is_empty()) {
        return Err(Error::Aggregation("need at least one non-empty trace".into()));
    }
    let finals: Vec<f64> = traces
        .iter()
        .map(|t| t.records.last().unwrap().best_y)
        .collect();
    let (mean, std) = mean_std(&finals);

    let best = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let best_trace = &traces[finals.iter().position(|&v| v == best).unwrap()];
    let earliest = best_trace
        .records
        .iter()
        .find(|r| r.best_y == best)
        .unwrap()
        .index;

    let horizon = traces.iter().map(|t| t.records.len()).min().unwrap();
    let curve = (0..horizon)
        .map(|i| {
            let at: Vec<f64> = traces.iter().map(|t| t.records[i].best_y).collect();
            mean_std(&at)
        })
        .collect();

    Ok(SummaryTable {
        algorithm: manifest.config.algorithm.clone(),
        benchmark: manifest.config.benchmark.clone(),
        dim: manifest.config.dim,
        seeds: traces.len(),
        best,
        earliest,
        mean,
        std,
        curve,
    })
}

/// Curve data as tabular text: `eval_index,mean_best,std_best`.
pub fn curve_csv(table: &SummaryTable) -> String {
    let mut out = String::from("eval_index,mean_best,std_best\n");
    for (i, (m, s)) in table.curve.iter().enumerate() {
        out.push_str(&format!("{},{m},{s}\n", i + 1));
    }
    out
}

/// Table-3-style row: "algorithm  best/earliest  mean ± std".
pub fn table_row(t: &SummaryTable) -> String {
    format!(
        "{:<14} {:>12}  {:.4} \u{00b1} {:.4}",
        t.algorithm,
        format!("{:.2}/{}", t.best, t.earliest),
        t.mean,
        t.std
    )
}

/// Summarize one run directory, writing `summary.json` and `curve.csv` next
/// to the traces and returning the table.
pub fn summarize_dir(dir: &Path) -> Result<SummaryTable> {
    let (manifest, traces) = load_run_dir(dir)?;
    let table = summarize(&manifest, &traces)?;
    let spath = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&table).expect("summary serializes");
    std::fs::write(&spath, json).map_err(|e| Error::io(&spath, e))?;
    let cpath = dir.join("curve.csv");
    std::fs::write(&cpath, curve_csv(&table)).map_err(|e| Error::io(&cpath, e))?;
    Ok(table)
}

/// Compare several run directories on the same benchmark; returns the text
/// table. Directories on different benchmarks cannot be aggregated.
pub fn compare_dirs(dirs: &[impl AsRef<Path>]) -> Result<String> {
    let mut rows = Vec::new();
    let mut bench: Option<(String, usize)> = None;
    for d in dirs {
        let (manifest, traces) = load_run_dir(d.as_ref())?;
        let key = (manifest.config.benchmark.clone(), manifest.config.dim);
        match &bench {
            None => bench = Some(key),
            Some(b) if *b != key => {
                return Err(Error::Aggregation(format!(
                    "benchmark mismatch: {}-{}d vs {}-{}d",
                    b.0, b.1, key.0, key.1
                )))
            }
            _ => {}
        }
        rows.push(summarize(&manifest, &traces)?);
    }
    let (bname, bdim) = bench.ok_or_else(|| Error::Aggregation("no directories given".into()))?;
    let mut out = format!(
        "benchmark: {bname}-{bdim}d\n{:<14} {:>12}  {}\n",
        "algorithm", "best/step", "final mean \u{00b1} std"
    );
    for r in &rows {
        out.push_str(&table_row(r));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TraceRecord;
    use crate::harness::config::RunConfig;
    use crate::harness::runner::run_experiment;

    fn manifest_for(algorithm: &str) -> Manifest {
        Manifest {
            fingerprint: String::new(),
            version: String::new(),
            config: RunConfig {
                algorithm: algorithm.into(),
                benchmark: "ackley".into(),
                dim: 1,
                ..RunConfig::default()
            },
            wall_times_s: Default::default(),
        }
    }

    fn trace(seed: u64, bests: &[f64]) -> RunTrace {
        let records = bests
            .iter()
            .enumerate()
            .map(|(i, &b)| TraceRecord {
                index: i + 1,
                x: vec![0.0],
                y: b,
                best_y: b,
                node: "t".into(),
            })
            .collect();
        RunTrace { seed, records }
    }

    #[test]
    fn summary_best_earliest_and_moments() {
        let m = manifest_for("random");
        // final bests 0.07 and 0.10; the 0.07 first appears at index 3
        let traces = vec![
            trace(0, &[1.0, 0.5, 0.07, 0.07]),
            trace(1, &[0.9, 0.10, 0.10, 0.10]),
        ];
        let t = summarize(&m, &traces).unwrap();
        assert_eq!(t.best, 0.07);
        assert_eq!(t.earliest, 3);
        assert!((t.mean - 0.085).abs() < 1e-12);
        assert!((t.std - 0.015).abs() < 1e-12);
        assert!(table_row(&t).contains("0.07/3"));
    }

    #[test]
    fn identical_traces_have_zero_std() {
        let m = manifest_for("random");
        let traces = vec![trace(0, &[2.0, 1.0]), trace(1, &[2.0, 1.0])];
        let t = summarize(&m, &traces).unwrap();
        assert_eq!(t.std, 0.0);
        assert!(t.curve.iter().all(|&(_, s)| s == 0.0));
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let m = manifest_for("random");
        let a = vec![trace(0, &[3.0, 1.0]), trace(1, &[2.0, 2.0])];
        let b = vec![a[1].clone(), a[0].clone()];
        let ta = summarize(&m, &a).unwrap();
        let tb = summarize(&m, &b).unwrap();
        assert_eq!(ta.mean, tb.mean);
        assert_eq!(ta.std, tb.std);
        assert_eq!(ta.best, tb.best);
        assert_eq!(ta.curve, tb.curve);
    }

    #[test]
    fn compare_rejects_mismatched_benchmarks() {
        let t1 = tempfile::tempdir().unwrap();
        let t2 = tempfile::tempdir().unwrap();
        let mk = |dir: &Path, bench: &str| {
            run_experiment(&RunConfig {
                benchmark: bench.into(),
                dim: 2,
                algorithm: "random".into(),
                max_evals: 5,
                seeds: vec![0],
                out_dir: Some(dir.to_path_buf()),
                ..RunConfig::default()
            })
            .unwrap();
        };
        mk(t1.path(), "ackley");
        mk(t2.path(), "michalewicz");
        match compare_dirs(&[t1.path(), t2.path()]) {
            Err(Error::Aggregation(_)) => {}
            other => panic!("expected aggregation error, got {other:?}"),
        }
        // same benchmark works and lists one row per directory
        let t3 = tempfile::tempdir().unwrap();
        mk(t3.path(), "ackley");
        let text = compare_dirs(&[t1.path(), t3.path()]).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("benchmark: ackley-2d"));
    }

    #[test]
    fn summarize_dir_writes_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        run_experiment(&RunConfig {
            benchmark: "ackley".into(),
            dim: 2,
            algorithm: "random".into(),
            max_evals: 8,
            seeds: vec![0, 1],
            out_dir: Some(tmp.path().to_path_buf()),
            ..RunConfig::default()
        })
        .unwrap();
        let t = summarize_dir(tmp.path()).unwrap();
        assert_eq!(t.curve.len(), 8);
        assert!(tmp.path().join("summary.json").exists());
        let curve = std::fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
        assert!(curve.starts_with("eval_index,mean_best,std_best\n"));
        assert_eq!(curve.lines().count(), 9);
    }
}
