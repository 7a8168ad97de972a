//! End-to-end orchestration driven by a [`PipelineConfig`].
//!
//! A build writes `<output>/graph/` (deterministic for a given config and
//! inputs) and `<output>/perf.json` (wall-clock timings and peak memory).
//! Evaluation writes `<output>/eval_report.json`.

mod config;
mod evaluate;
mod graphdir;
mod prepare;

pub use config::{derive_seed, EvalConfig, EvalTask, ExportConfig, InputPaths, PipelineConfig};
pub use evaluate::{
    clustering_task, run_tasks, supervised_task, truth_ids, zero_shot_task, ClusteringResult, EvalReport,
    SupervisedResult, ZeroShotResult, NOTICES, REPORT_FORMAT_VERSION,
};
pub use graphdir::{
    load_graph_dir, provenance_counts, sha256_file, sha256_hex, write_graph_dir, Counts, LoadedGraph, Manifest,
    COMPATIBILITY, DOWNSAMPLE_REPORT, EDGES, EDGE_FEATURES, KEPT_CELLS, MANIFEST, NODES, NODE_FEATURES, QC_REPORT,
};
pub use prepare::{build_graph, prepare, prepare_from, read_inputs, Inputs, LabelView, Prepared, StageTiming};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAPH_DIR: &str = "graph";
pub const PERF: &str = "perf.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const CROSS_VIEW_TSV: &str = "cross_view.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
    /// High-water resident set size of this process; `None` where the
    /// platform does not expose it.
    pub peak_rss_bytes: Option<u64>,
    pub threads: usize,
    pub peak_edge_records: usize,
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub output: PathBuf,
    pub manifest: Manifest,
    pub perf: PerfReport,
}

fn partial_dir(output: &Path) -> PathBuf {
    let name = output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    output.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

/// Refuses to replace a non-empty directory that is not a previous build.
fn check_replaceable(output: &Path) -> Result<()> {
    if !output.exists() {
        return Ok(());
    }
    let is_empty = std::fs::read_dir(output)
        .map_err(|e| Error::io(output, e))?
        .next()
        .is_none();
    if is_empty || output.join(GRAPH_DIR).join(MANIFEST).is_file() {
        return Ok(());
    }
    Err(Error::Config(format!(
        "output directory {} exists and is not a previous build; refusing to overwrite",
        output.display()
    )))
}

/// Runs every stage and writes the output directory. Work happens in a
/// sibling directory that replaces `cfg.output` only on success.
pub fn run_build(cfg: &PipelineConfig) -> Result<BuildOutcome> {
    let start = Instant::now();
    check_replaceable(&cfg.output)?;
    if let Some(parent) = cfg.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let partial = partial_dir(&cfg.output);
    if partial.exists() {
        std::fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    let result = build_into(cfg, &partial, start);
    match result {
        Ok((manifest, perf)) => {
            if cfg.output.exists() {
                std::fs::remove_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
            }
            std::fs::rename(&partial, &cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
            Ok(BuildOutcome {
                output: cfg.output.clone(),
                manifest,
                perf,
            })
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&partial);
            Err(e)
        }
    }
}

fn build_into(cfg: &PipelineConfig, dir: &Path, start: Instant) -> Result<(Manifest, PerfReport)> {
    let prepared = prepare(cfg)?;
    let mut timings = prepared.timings.clone();
    let labels = LabelView::from_metadata(&prepared.metadata);
    let t = Instant::now();
    let (graph, stats) = build_graph(&prepared, cfg, &labels).map_err(|e| Error::Stage {
        stage: "topology",
        source: Box::new(e),
    })?;
    timings.push(StageTiming {
        stage: "topology".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    let t = Instant::now();
    let manifest = write_graph_dir(&dir.join(GRAPH_DIR), cfg, &prepared, &labels, &graph, &stats).map_err(|e| {
        Error::Stage {
            stage: "export",
            source: Box::new(e),
        }
    })?;
    timings.push(StageTiming {
        stage: "export".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    let perf = PerfReport {
        stages: timings,
        total_seconds: start.elapsed().as_secs_f64(),
        peak_rss_bytes: peak_rss_bytes(),
        threads: rayon::current_num_threads(),
        peak_edge_records: stats.peak_edge_records,
    };
    write_json(&dir.join(PERF), &perf)?;
    Ok((manifest, perf))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Loads the graph written by [`run_build`], checks it belongs to this
/// config, runs the configured tasks and writes the report.
pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let graph_dir = cfg.output.join(GRAPH_DIR);
    if !graph_dir.join(MANIFEST).is_file() {
        return Err(Error::Data(format!(
            "no graph found at {}; run `build` first",
            graph_dir.display()
        )));
    }
    let graph = load_graph_dir(&graph_dir)?;
    if graph.manifest.config_hash != cfg.config_hash() {
        return Err(Error::Data(format!(
            "graph at {} was built with a different configuration; rebuild it",
            graph_dir.display()
        )));
    }
    let prepared = prepare(cfg)?;
    let report = run_tasks(cfg, &prepared, &graph)?;
    write_json(&cfg.output.join(EVAL_REPORT), &report)?;
    if let Some(cv) = &report.cross_view {
        let p = cfg.output.join(CROSS_VIEW_TSV);
        std::fs::write(&p, cv.to_tsv()).map_err(|e| Error::io(&p, e))?;
    }
    Ok(report)
}
