//! On-disk graph directory: nodes, edges, features, reports and a manifest
//! holding content hashes of every other file.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LabelView, PipelineConfig, Prepared};
use crate::error::{Error, Result};
use crate::features::View;
use crate::topology::{CellGraph, Edge, Provenance, TopologyStats};

pub const MANIFEST: &str = "manifest.json";
pub const NODES: &str = "nodes.tsv";
pub const EDGES: &str = "edges.tsv";
pub const NODE_FEATURES: &str = "node_features";
pub const EDGE_FEATURES: &str = "edge_features";
pub const COMPATIBILITY: &str = "compatibility.tsv";
pub const QC_REPORT: &str = "qc_report.json";
pub const DOWNSAMPLE_REPORT: &str = "downsample_report.json";
pub const KEPT_CELLS: &str = "kept_cells.txt";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub cells_in: usize,
    pub genes_in: usize,
    pub nodes: usize,
    pub reference_nodes: usize,
    pub query_nodes: usize,
    pub genes_used: usize,
    pub node_feature_dim: usize,
    pub edges: usize,
    /// Edges carrying each tag; an edge with two tags counts twice.
    pub by_provenance: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub similarity_space: View,
    pub phylo_radius: f64,
    pub counts: Counts,
    pub topology: TopologyStats,
    /// SHA-256 of the label-independent inputs.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every other file in the directory.
    pub artifacts: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn write(dir: &Path, name: &str, bytes: &[u8], artifacts: &mut BTreeMap<String, String>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    artifacts.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn provenance_counts(edges: &[Edge]) -> BTreeMap<String, usize> {
    Provenance::names()
        .map(|(p, name)| (name.to_string(), edges.iter().filter(|e| e.provenance.contains(p)).count()))
        .collect()
}

/// Writes the graph directory. Only labels in `labels.visible` are
/// written; nothing else derived from metadata labels is stored.
pub fn write_graph_dir(
    dir: &Path,
    cfg: &PipelineConfig,
    prepared: &Prepared,
    labels: &LabelView,
    graph: &CellGraph,
    stats: &TopologyStats,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut artifacts = BTreeMap::new();
    let meta = &prepared.metadata;

    let mut nodes = String::from("node\tcell_id\tspecies\tdomain\tsplit\tcell_type\n");
    for (i, r) in meta.iter().enumerate() {
        let role = if labels.is_reference[i] { "reference" } else { "query" };
        let label = labels.visible[i].as_deref().unwrap_or("-");
        let _ = writeln!(nodes, "{i}\t{}\t{}\t{}\t{role}\t{label}", r.cell_id, r.species, r.domain);
    }
    write(dir, NODES, nodes.as_bytes(), &mut artifacts)?;

    let mut edges = String::from("u_id\tv_id\tprovenance\n");
    for e in graph.edges() {
        let _ = writeln!(
            edges,
            "{}\t{}\t{}",
            meta.get(e.u as usize).cell_id,
            meta.get(e.v as usize).cell_id,
            e.provenance
        );
    }
    write(dir, EDGES, edges.as_bytes(), &mut artifacts)?;

    let h = graph.node_features();
    if cfg.export.feature_tsv {
        write(dir, &format!("{NODE_FEATURES}.tsv"), h.to_tsv().as_bytes(), &mut artifacts)?;
    }
    write(dir, &format!("{NODE_FEATURES}.f64"), &h.to_le_bytes(), &mut artifacts)?;
    write(dir, &format!("{NODE_FEATURES}.json"), &json(&h.shape())?, &mut artifacts)?;
    if cfg.export.edge_features {
        let values = graph.edge_features()?;
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let width = if graph.edges().is_empty() { 0 } else { values.len() / graph.edges().len() };
        let shape = serde_json::json!({
            "rows": graph.edges().len(),
            "cols": width,
            "dtype": "float64",
            "byte_order": "little",
            "layout": "row-major",
            "row_order": EDGES,
        });
        write(dir, &format!("{EDGE_FEATURES}.f64"), &bytes, &mut artifacts)?;
        write(dir, &format!("{EDGE_FEATURES}.json"), &json(&shape)?, &mut artifacts)?;
    }
    write(dir, COMPATIBILITY, prepared.compat.to_tsv().as_bytes(), &mut artifacts)?;
    write(dir, QC_REPORT, &json(&prepared.qc_report)?, &mut artifacts)?;
    write(dir, DOWNSAMPLE_REPORT, &json(&prepared.downsample_report)?, &mut artifacts)?;
    let kept: String = meta.iter().map(|r| format!("{}\n", r.cell_id)).collect();
    write(dir, KEPT_CELLS, kept.as_bytes(), &mut artifacts)?;

    let mut inputs = BTreeMap::new();
    for (role, path) in cfg.inputs.all() {
        if role != "metadata" {
            inputs.insert(role.to_string(), sha256_file(&path)?);
        }
    }
    let n_ref = labels.is_reference.iter().filter(|&&r| r).count();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: cfg.config_hash(),
        config: cfg.stage_settings(),
        seeds: BTreeMap::from([
            ("global".to_string(), cfg.seed),
            ("downsample".to_string(), cfg.downsample.seed),
            ("pca".to_string(), cfg.features.pca_seed),
        ]),
        similarity_space: graph.similarity_view(),
        phylo_radius: prepared.compat.radius,
        counts: Counts {
            cells_in: prepared.cells_in,
            genes_in: prepared.genes_in,
            nodes: graph.n_nodes(),
            reference_nodes: n_ref,
            query_nodes: graph.n_nodes() - n_ref,
            genes_used: prepared.expression.n_genes(),
            node_feature_dim: h.dim(),
            edges: graph.edges().len(),
            by_provenance: provenance_counts(graph.edges()),
        },
        topology: stats.clone(),
        inputs,
        artifacts,
        notes: prepared.notes.clone(),
    };
    let p = dir.join(MANIFEST);
    std::fs::write(&p, json(&manifest)?).map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

/// A graph directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub manifest: Manifest,
    pub cell_ids: Vec<String>,
    pub is_reference: Vec<bool>,
    pub edges: Vec<Edge>,
}

impl LoadedGraph {
    pub fn n_nodes(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in &self.edges {
            adj[e.u as usize].push(e.v);
            adj[e.v as usize].push(e.u);
        }
        adj
    }

    /// Degree → number of nodes with that degree.
    pub fn degree_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for nbrs in self.adjacency() {
            *hist.entry(nbrs.len()).or_insert(0) += 1;
        }
        hist
    }
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    std::fs::read(&p).map_err(|e| Error::io(&p, e))
}

/// Loads a graph directory and checks every artifact hash.
pub fn load_graph_dir(dir: &Path) -> Result<LoadedGraph> {
    let manifest_bytes = read(dir, MANIFEST)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::parse(&dir.join(MANIFEST).display().to_string(), e.line(), e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!("unsupported graph format version {}", manifest.format_version)));
    }
    for (name, hash) in &manifest.artifacts {
        if sha256_hex(&read(dir, name)?) != *hash {
            return Err(Error::Data(format!("{name} does not match its manifest hash")));
        }
    }
    let nodes_name = dir.join(NODES).display().to_string();
    let nodes_text = String::from_utf8(read(dir, NODES)?).map_err(|e| Error::parse(&nodes_name, 0, e.to_string()))?;
    let mut cell_ids = Vec::new();
    let mut is_reference = Vec::new();
    for (ln, line) in nodes_text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::parse(&nodes_name, ln + 1, "expected 6 fields"));
        }
        cell_ids.push(f[1].to_string());
        is_reference.push(f[4] == "reference");
    }
    let index: HashMap<&str, u32> = cell_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i as u32)).collect();
    let edges_name = dir.join(EDGES).display().to_string();
    let edges_text = String::from_utf8(read(dir, EDGES)?).map_err(|e| Error::parse(&edges_name, 0, e.to_string()))?;
    let mut edges = Vec::new();
    for (ln, line) in edges_text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(&edges_name, ln + 1, "expected 3 fields"));
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::parse(&edges_name, ln + 1, format!("unknown cell `{id}`")))
        };
        let (u, v) = (lookup(f[0])?, lookup(f[1])?);
        let provenance: Provenance = f[2].parse().map_err(|e: Error| Error::parse(&edges_name, ln + 1, e.to_string()))?;
        edges.push(Edge {
            u: u.min(v),
            v: u.max(v),
            provenance,
        });
    }
    Ok(LoadedGraph {
        manifest,
        cell_ids,
        is_reference,
        edges,
    })
}
