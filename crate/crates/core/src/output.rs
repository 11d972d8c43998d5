//! Writing experiment results to disk.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.toml
//! summary_<algorithm>.csv
//! rolling_error_<algorithm>.csv
//! traces/<algorithm>_run<NNN>.csv
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::metrics::{RegretTrace, Step};
use crate::runner::{run_seed, AlgorithmResults, ExperimentOutcome};
use crate::schedule::GridLaw;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let err = |source| RunError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(err)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(err)
}

fn to_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

fn csv_bytes(path: &Path, rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, RunError> {
    to_bytes(rows).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Header of a trace file for contexts of dimension `dim`.
pub fn trace_header(dim: usize) -> Vec<String> {
    let mut h = vec!["run".to_string(), "t".into(), "batch".into()];
    h.extend((0..dim).map(|i| format!("c{i}")));
    h.extend(
        ["chosen_arm", "optimal_arm", "reward", "inst_regret", "cum_regret"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn trace_rows(run: usize, dim: usize, trace: &RegretTrace) -> impl Iterator<Item = Vec<String>> + '_ {
    std::iter::once(trace_header(dim)).chain(trace.steps().iter().map(move |s| {
        let mut row = vec![run.to_string(), s.t.to_string(), s.batch.to_string()];
        row.extend(s.context.iter().map(|c| c.to_string()));
        row.extend([
            s.chosen_arm.to_string(),
            s.optimal_arm.to_string(),
            s.reward.to_string(),
            s.inst_regret.to_string(),
            s.cum_regret.to_string(),
        ]);
        row
    }))
}

/// Reads a trace file back. Returns the run index and the trace.
pub fn read_trace(path: &Path) -> Result<(usize, RegretTrace), Box<dyn std::error::Error + Send + Sync>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len().checked_sub(8).ok_or("trace header too short")?;
    let mut run = 0;
    let mut steps = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).ok_or("short row");
        run = f(0)?.parse()?;
        let context = (0..dim).map(|i| f(3 + i)?.parse::<f64>().map_err(Into::into)).collect::<Result<
            Vec<f64>,
            Box<dyn std::error::Error + Send + Sync>,
        >>()?;
        steps.push(Step {
            t: f(1)?.parse()?,
            batch: f(2)?.parse()?,
            context,
            chosen_arm: f(3 + dim)?.parse()?,
            optimal_arm: f(4 + dim)?.parse()?,
            reward: f(5 + dim)?.parse()?,
            inst_regret: f(6 + dim)?.parse()?,
            cum_regret: f(7 + dim)?.parse()?,
        });
    }
    Ok((run, RegretTrace::from_steps(steps)))
}

fn series_rows<'a>(
    value_column: &str,
    algorithm: &'a str,
    checkpoints: &'a [u64],
    mean: &'a [f64],
    half_width: Option<&'a [f64]>,
) -> impl Iterator<Item = Vec<String>> + 'a {
    let mut header = vec!["algorithm".to_string(), "t".into(), value_column.into()];
    if half_width.is_some() {
        header.push("half_width".into());
    }
    std::iter::once(header).chain(checkpoints.iter().enumerate().map(move |(i, t)| {
        let mut row = vec![algorithm.to_string(), t.to_string(), mean[i].to_string()];
        if let Some(hw) = half_width {
            row.push(hw[i].to_string());
        }
        row
    }))
}

pub fn trace_path(dir: &Path, algorithm: &str, run: usize) -> PathBuf {
    dir.join("traces").join(format!("{algorithm}_run{run:03}.csv"))
}

#[derive(Debug, Serialize)]
struct GridRecord {
    endpoints: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    law: Option<GridLaw>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    horizon: u64,
    checkpoint_stride: u64,
    rolling_window: usize,
    num_arms: usize,
    dim: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    code_version: &'static str,
    config: &'a ExperimentConfig,
    resolved: Resolved,
    grid: GridRecord,
    /// Keys filled from defaults.
    defaults: &'a BTreeMap<String, String>,
    /// Per-run seeds as decimal strings; they may exceed a TOML integer.
    run_seeds: Vec<String>,
    files: Vec<String>,
}

fn rel(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn write_algorithm(dir: &Path, dim: usize, res: &AlgorithmResults, files: &mut Vec<String>) -> Result<(), RunError> {
    let name = res.algorithm.name();
    for run in &res.runs {
        let path = trace_path(dir, name, run.run);
        write_atomic(&path, &csv_bytes(&path, trace_rows(run.run, dim, &run.trace))?)?;
        files.push(rel(dir, &path));
    }
    let path = dir.join(format!("summary_{name}.csv"));
    let hw = res.regret_summary.as_ref().map(|s| s.half_width.as_slice());
    let rows = series_rows("mean_cum_regret", name, &res.checkpoints, &res.mean_regret, hw);
    write_atomic(&path, &csv_bytes(&path, rows)?)?;
    files.push(rel(dir, &path));

    let path = dir.join(format!("rolling_error_{name}.csv"));
    let hw = res.rolling_summary.as_ref().map(|s| s.half_width.as_slice());
    let rows = series_rows(
        "mean_rolling_error",
        name,
        &res.rolling_checkpoints,
        &res.mean_rolling_error,
        hw,
    );
    write_atomic(&path, &csv_bytes(&path, rows)?)?;
    files.push(rel(dir, &path));
    Ok(())
}

/// Writes traces, summaries and the manifest; returns the manifest path.
pub fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<PathBuf, RunError> {
    let cfg = &outcome.config;
    let dim = outcome.environment.dim();
    let mut files = Vec::new();
    for res in &outcome.results {
        write_algorithm(dir, dim, res, &mut files)?;
    }
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        resolved: Resolved {
            horizon: outcome.horizon,
            checkpoint_stride: cfg.checkpoint_stride_for(outcome.horizon),
            rolling_window: outcome.rolling_window,
            num_arms: outcome.environment.num_arms(),
            dim,
        },
        grid: GridRecord {
            endpoints: outcome.grid.endpoints().to_vec(),
            law: outcome.grid.law(),
        },
        defaults: &cfg.defaulted,
        run_seeds: (0..cfg.runs).map(|r| run_seed(cfg.master_seed, r).to_string()).collect(),
        files,
    };
    let text = toml::to_string(&manifest)?;
    let path = dir.join("manifest.toml");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let entries: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn trace_header_columns() {
        assert_eq!(
            trace_header(2).join(","),
            "run,t,batch,c0,c1,chosen_arm,optimal_arm,reward,inst_regret,cum_regret"
        );
    }

    #[test]
    fn single_run_summary_has_no_half_width() {
        let rows: Vec<_> = series_rows("mean_cum_regret", "binse", &[5, 10], &[1.0, 2.5], None).collect();
        assert_eq!(rows[0].join(","), "algorithm,t,mean_cum_regret");
        assert_eq!(rows[2].join(","), "binse,10,2.5");
        let rows: Vec<_> = series_rows("m", "binse", &[5], &[1.0], Some(&[0.25])).collect();
        assert_eq!(rows[1].join(","), "binse,5,1,0.25");
    }

    #[test]
    fn empty_checkpoints_give_header_only() {
        let bytes = to_bytes(series_rows("mean_cum_regret", "bank_ucb", &[], &[], Some(&[]))).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "algorithm,t,mean_cum_regret,half_width\n");
    }
}
