//! `dogma`: synthesize corpora, build cell graphs, evaluate and inspect them.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dogma_core::pipeline::{
    load_graph_dir, provenance_counts, run_build, run_eval, EvalReport, LoadedGraph, PipelineConfig, GRAPH_DIR,
    MANIFEST,
};
use dogma_core::synth::{generate, write_corpus};
use dogma_core::{Error, ErrorKind, Result};

/// Writes a line to stdout; a closed pipe (e.g. `| head`) truncates output
/// instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "dogma", version, about = "Knowledge-guided cell graph construction")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus to the config's input directory.
    Synth {
        /// Pipeline config; `[synth]` and `inputs.dir` are used. Defaults
        /// apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus directory; overrides `inputs.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every stage and write `<out>/graph/`.
    Build(Common),
    /// Run the configured evaluation tasks against a built graph.
    Eval(Common),
    /// Summarize a graph directory (or the output directory holding it).
    Inspect {
        dir: PathBuf,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Internal => 4,
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn cmd_synth(config: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    let dir = out.unwrap_or(cfg.inputs.dir.clone());
    let corpus = generate(&cfg.synth)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write_corpus(&corpus, &dir)?;
    out!(
        "wrote {} cells x {} genes to {}",
        corpus.matrix.n_cells(),
        corpus.matrix.n_genes(),
        dir.display()
    );
    Ok(())
}

fn cmd_build(cfg: &PipelineConfig) -> Result<()> {
    let outcome = run_build(cfg)?;
    let c = &outcome.manifest.counts;
    let tags: Vec<String> = c.by_provenance.iter().map(|(k, v)| format!("{k} {v}")).collect();
    out!(
        "graph written to {}: {} nodes, {} edges ({})",
        outcome.output.join(GRAPH_DIR).display(),
        c.nodes,
        c.edges,
        tags.join(", ")
    );
    out!(
        "total {:.2}s, peak rss {}",
        outcome.perf.total_seconds,
        outcome
            .perf
            .peak_rss_bytes
            .map_or("unknown".to_string(), |b| format!("{:.1} MiB", b as f64 / (1024.0 * 1024.0)))
    );
    Ok(())
}

fn print_report(report: &EvalReport) {
    for s in report.supervised.iter().flatten() {
        out!(
            "supervised: train/val/test {}/{}/{}, test accuracy {:.4} (kNN baseline {:.4})",
            s.train, s.val, s.test, s.test_accuracy, s.knn_baseline_test_accuracy
        );
    }
    for z in report.zero_shot.iter().flatten() {
        let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        out!(
            "zero-shot: {} seen / {} unseen types, relaxed accuracy {}, ARI {}, AMI {}",
            z.seen_types.len(),
            z.unseen_types.len(),
            show(z.unseen_relaxed_accuracy),
            show(z.unseen_cluster_ari),
            show(z.unseen_cluster_ami)
        );
    }
    for c in report.clustering.iter().flatten() {
        out!("clustering: {} clusters, ARI {:.4}, AMI {:.4}", c.clusters, c.ari, c.ami);
    }
    if let Some(cv) = &report.cross_view {
        out!(
            "cross-view: raw r {:.3} ± {:.3}, GO r {:.3} ± {:.3}",
            cv.raw.mean, cv.raw.sd, cv.go.mean, cv.go.sd
        );
    }
    for n in &report.notices {
        out!("note: {n}");
    }
}

fn graph_dir(dir: &Path) -> PathBuf {
    if dir.join(MANIFEST).is_file() {
        dir.to_path_buf()
    } else {
        dir.join(GRAPH_DIR)
    }
}

/// Recomputed counts must agree with the manifest.
fn check_against_manifest(g: &LoadedGraph) -> Result<()> {
    let m = &g.manifest.counts;
    if m.nodes != g.n_nodes() || m.edges != g.edges.len() || m.by_provenance != provenance_counts(&g.edges) {
        return Err(Error::Data("graph files disagree with the manifest counts".into()));
    }
    Ok(())
}

fn cmd_inspect(dir: &Path) -> Result<()> {
    let dir = graph_dir(dir);
    if !dir.join(MANIFEST).is_file() {
        return Err(Error::Data(format!("no {MANIFEST} in {}", dir.display())));
    }
    let g = load_graph_dir(&dir)?;
    check_against_manifest(&g)?;
    let reference = g.is_reference.iter().filter(|&&r| r).count();
    out!("graph: {}", dir.display());
    out!("config_hash: {}", g.manifest.config_hash);
    out!("nodes: {} (reference {}, query {})", g.n_nodes(), reference, g.n_nodes() - reference);
    out!("edges: {}", g.edges.len());
    out!("edges by provenance:");
    for (name, n) in provenance_counts(&g.edges) {
        out!("  {name}\t{n}");
    }
    out!("degree histogram:");
    for (degree, n) in g.degree_histogram() {
        out!("  {degree}\t{n}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(config.as_deref(), out, seed),
        Command::Build(common) => cmd_build(&load_config(&common)?),
        Command::Eval(common) => {
            let report = run_eval(&load_config(&common)?)?;
            print_report(&report);
            Ok(())
        }
        Command::Inspect { dir } => cmd_inspect(&dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DOGMA_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
