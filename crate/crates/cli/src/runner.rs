//! Running experiments and writing their artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::experiments::prepare;
use crate::report::{censoring_rate, read_report, status_for, ReplicaSummary, RunReport, Table, SCHEMA_VERSION};

/// Runs every replica of `cfg` on `cfg.workers` threads and writes the
/// artifacts into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let report = compute_report(cfg)?;
    write_artifacts(report)
}

/// [`run_experiment`] without touching the file system.
pub fn compute_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let replicas: Vec<ReplicaSummary> = if prep.has_replicas() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers.max(1))
            .build()
            .context("building worker pool")?;
        // `collect` keeps replica order whatever the scheduling.
        pool.install(|| {
            cfg.replica_range()
                .into_par_iter()
                .map(|i| prep.summarize(i))
                .collect::<std::result::Result<Vec<_>, _>>()
        })?
    } else {
        Vec::new()
    };
    let analysis = prep.analyze(&replicas)?;
    let rate = censoring_rate(&replicas);
    Ok(RunReport {
        schema: SCHEMA_VERSION,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        status: status_for(rate),
        censoring_rate: rate,
        columns: prep.columns,
        replicas,
        analysis,
        wall_clock_s: start.elapsed().as_secs_f64(),
        artifacts: Vec::new(),
    })
}

/// Combines reports of one configuration that cover different replica
/// ranges. Statistics are recomputed from the pooled per-replica
/// summaries, so the result equals a single run over the union.
pub fn merge_reports(paths: &[PathBuf]) -> Result<RunReport> {
    if paths.is_empty() {
        bail!("nothing to merge");
    }
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        reports.push(read_report(p)?);
    }
    merge_loaded(reports)
}

pub fn merge_loaded(reports: Vec<RunReport>) -> Result<RunReport> {
    let first = reports.first().context("nothing to merge")?;
    let hash = first.config_hash.clone();
    for r in &reports {
        if r.config_hash != hash {
            bail!("config hash mismatch: {} vs {}", r.config_hash, hash);
        }
    }
    let mut cfg = first.config.clone();
    let wall: f64 = reports.iter().map(|r| r.wall_clock_s).sum();
    let mut replicas: Vec<ReplicaSummary> = reports.into_iter().flat_map(|r| r.replicas).collect();
    replicas.sort_by_key(|r| r.index);
    if let Some(w) = replicas.windows(2).find(|w| w[0].index == w[1].index) {
        bail!("replica {} appears in more than one report", w[0].index);
    }
    cfg.first_replica = replicas.first().map(|r| r.index).unwrap_or(0);
    cfg.replicas = replicas.len();
    let prep = prepare(&cfg)?;
    let analysis = prep.analyze(&replicas)?;
    let rate = censoring_rate(&replicas);
    Ok(RunReport {
        schema: SCHEMA_VERSION,
        config_hash: hash,
        config: cfg,
        status: status_for(rate),
        censoring_rate: rate,
        columns: prep.columns,
        replicas,
        analysis,
        wall_clock_s: wall,
        artifacts: Vec::new(),
    })
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

fn header(report: &RunReport) -> String {
    format!(
        "# schema={} config_hash={} kind={}\n",
        SCHEMA_VERSION, report.config_hash, report.config.kind
    )
}

pub fn table_csv(report: &RunReport, table: &Table) -> String {
    let mut s = header(report);
    s += &table.columns.join(",");
    s.push('\n');
    for row in &table.rows {
        s += &row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    s
}

pub fn summary_csv(report: &RunReport) -> String {
    let mut s = header(report);
    s += "statistic,count,mean,se\n";
    for st in &report.analysis.stats {
        s += &format!("{},{},{},{}\n", csv_field(&st.name), st.count, st.mean, st.se);
    }
    s
}

pub fn derived_csv(report: &RunReport) -> String {
    let mut s = header(report);
    s += "quantity,value\n";
    for d in &report.analysis.derived {
        s += &format!("{},{}\n", csv_field(&d.name), d.value);
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn replicas_jsonl(report: &RunReport) -> Result<String> {
    let mut s = String::new();
    for r in &report.replicas {
        s += &serde_json::to_string(r)?;
        s.push('\n');
    }
    Ok(s)
}

/// Writes replicas.jsonl, summary.csv, derived.csv, one CSV per table, text
/// artifacts and finally report.json, each atomically.
pub fn write_artifacts(mut report: RunReport) -> Result<RunReport> {
    let dir = report.config.out_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("replicas.jsonl".into(), replicas_jsonl(&report)?.into_bytes()),
        ("summary.csv".into(), summary_csv(&report).into_bytes()),
        ("derived.csv".into(), derived_csv(&report).into_bytes()),
    ];
    for t in &report.analysis.tables {
        files.push((format!("{}.csv", t.name), table_csv(&report, t).into_bytes()));
    }
    for (name, text) in &report.analysis.texts {
        files.push((name.clone(), format!("{}{text}", header(&report)).into_bytes()));
    }
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
    }
    report.artifacts = files.into_iter().map(|(n, _)| n).chain(["report.json".to_string()]).collect();
    let json = serde_json::to_vec_pretty(&report)?;
    write_atomic(&dir.join("report.json"), &json)?;
    Ok(report)
}
