//! Graph topology: alignment, ontology and phylogeny edge sub-sets, their
//! provenance-tagged union, and label-free attachment of Query cells.

mod edges;
mod knn;

pub use edges::{knn_edges, mnn_edges, onto_edges, phylo_edges, query_attach_edges};
pub use knn::{cosine_topk, CosineIndex};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, View};
use crate::ingest::{CellMetadata, Split};
use crate::ontology::{CompatibilityMatrix, SemanticMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub k_align: usize,
    pub k_onto: usize,
    pub k_phy: usize,
    /// Evolutionary radius. Required when the species tree has explicit
    /// branch lengths; otherwise defaults to a hop radius.
    pub delta: Option<f64>,
    /// Maximum cell-ontology hop distance for an Onto edge.
    pub onto_max_distance: u32,
    pub enable_align: bool,
    pub enable_onto: bool,
    pub enable_phy: bool,
    pub enable_go: bool,
    /// Drop alignment candidates whose species pair is outside the radius.
    pub restrict_align_to_compatible: bool,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            k_align: 10,
            k_onto: 10,
            k_phy: 10,
            delta: None,
            onto_max_distance: 1,
            enable_align: true,
            enable_onto: true,
            enable_phy: true,
            enable_go: true,
            restrict_align_to_compatible: true,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("k_align", self.k_align), ("k_onto", self.k_onto), ("k_phy", self.k_phy)] {
            if k == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("delta must be a non-negative number, got {d}")));
            }
        }
        Ok(())
    }
}

bitflags! {
    /// Which sub-sets contributed an edge.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
    pub struct Provenance: u8 {
        const ALIGN = 1;
        const ONTO = 2;
        const PHY = 4;
        const QUERY_ATTACH = 8;
    }
}

const PROVENANCE_NAMES: [(Provenance, &str); 4] = [
    (Provenance::ALIGN, "Align"),
    (Provenance::ONTO, "Onto"),
    (Provenance::PHY, "Phy"),
    (Provenance::QUERY_ATTACH, "QueryAttach"),
];

impl Provenance {
    pub fn names() -> impl Iterator<Item = (Provenance, &'static str)> {
        PROVENANCE_NAMES.into_iter()
    }
}

/// `Align|Onto` style; the empty set prints as `-`.
impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = PROVENANCE_NAMES
            .iter()
            .filter(|(p, _)| self.contains(*p))
            .map(|&(_, n)| n)
            .collect();
        if parts.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&parts.join("|"))
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "-" {
            return Ok(Provenance::empty());
        }
        let mut out = Provenance::empty();
        for part in s.split('|') {
            let p = PROVENANCE_NAMES
                .iter()
                .find(|(_, n)| *n == part)
                .map(|&(p, _)| p)
                .ok_or_else(|| Error::Data(format!("unknown provenance tag `{part}`")))?;
            out |= p;
        }
        Ok(out)
    }
}

/// Undirected edge stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub provenance: Provenance,
}

/// Per-cell integer attributes used by the edge builders. Domains are
/// keyed by (species, domain name), so equal batch names in different
/// species stay distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub species: Vec<u32>,
    pub domain: Vec<u32>,
    pub is_reference: Vec<bool>,
    domain_names: Vec<(String, String)>,
}

impl NodeTable {
    pub fn from_metadata(meta: &CellMetadata, compat: &CompatibilityMatrix) -> Result<Self> {
        let mut species = Vec::with_capacity(meta.len());
        let mut domain = Vec::with_capacity(meta.len());
        let mut is_reference = Vec::with_capacity(meta.len());
        let mut domain_names: Vec<(String, String)> = Vec::new();
        let mut domain_index: HashMap<(String, String), u32> = HashMap::new();
        for r in meta.iter() {
            let s = compat
                .index_of(&r.species)
                .ok_or_else(|| Error::UnknownSpecies(r.species.clone()))?;
            species.push(s as u32);
            let key = (r.species.clone(), r.domain.clone());
            let d = *domain_index.entry(key.clone()).or_insert_with(|| {
                domain_names.push(key);
                (domain_names.len() - 1) as u32
            });
            domain.push(d);
            is_reference.push(r.split == Split::Reference);
        }
        Ok(NodeTable {
            species,
            domain,
            is_reference,
            domain_names,
        })
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn n_domains(&self) -> usize {
        self.domain_names.len()
    }

    pub fn domain_name(&self, d: usize) -> (&str, &str) {
        let (s, n) = &self.domain_names[d];
        (s, n)
    }

    pub fn reference_cells(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&i| self.is_reference[i as usize]).collect()
    }

    pub fn query_cells(&self) -> Vec<u32> {
        (0..self.len() as u32).filter(|&i| !self.is_reference[i as usize]).collect()
    }
}

/// Edge counts per sub-set before the union, and the largest number of
/// edge records held at once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyStats {
    pub align: usize,
    pub onto: usize,
    pub phy: usize,
    pub query_attach: usize,
    pub peak_edge_records: usize,
}

/// Cells with fused node features and a provenance-tagged undirected edge
/// list, sorted by `(u, v)` with one record per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGraph {
    node_features: FeatureMatrix,
    similarity_view: View,
    edges: Vec<Edge>,
}

impl CellGraph {
    /// Merges tagged pair lists into one record per pair.
    pub fn from_tagged(
        node_features: FeatureMatrix,
        similarity_view: View,
        parts: Vec<(Provenance, Vec<(u32, u32)>)>,
    ) -> Result<Self> {
        let n = node_features.n_rows() as u32;
        let mut all: Vec<(u32, u32, Provenance)> = Vec::with_capacity(parts.iter().map(|p| p.1.len()).sum());
        for (tag, pairs) in parts {
            for (u, v) in pairs {
                if u >= v || v >= n {
                    return Err(Error::Internal(format!("non-canonical edge ({u}, {v})")));
                }
                all.push((u, v, tag));
            }
        }
        all.sort_unstable();
        let mut edges: Vec<Edge> = Vec::with_capacity(all.len());
        for (u, v, p) in all {
            match edges.last_mut() {
                Some(e) if e.u == u && e.v == v => e.provenance |= p,
                _ => edges.push(Edge { u, v, provenance: p }),
            }
        }
        Ok(CellGraph {
            node_features,
            similarity_view,
            edges,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.n_rows()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_features(&self) -> &FeatureMatrix {
        &self.node_features
    }

    /// Feature space in which similarities were computed.
    pub fn similarity_view(&self) -> View {
        self.similarity_view
    }

    /// Number of edges carrying each tag; an edge with two tags counts
    /// toward both.
    pub fn count_with(&self, tag: Provenance) -> usize {
        self.edges.iter().filter(|e| e.provenance.intersects(tag)).count()
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in &self.edges {
            adj[e.u as usize].push(e.v);
            adj[e.v as usize].push(e.u);
        }
        adj
    }

    /// Per-edge feature vectors, computed on demand; flat, one block of
    /// width `edge_feature_dim` per edge in edge order.
    pub fn edge_features(&self) -> Result<Vec<f64>> {
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.u as usize, e.v as usize)).collect();
        crate::features::edge_features(&self.node_features, &pairs)
    }
}

/// Reference-internal graph from the enabled sub-sets. `mask` carries only
/// labels visible to graph construction.
pub fn build_topology(
    features: FeatureMatrix,
    nodes: &NodeTable,
    mask: &SemanticMask,
    compat: &CompatibilityMatrix,
    cfg: &TopologyConfig,
) -> Result<(CellGraph, TopologyStats)> {
    cfg.validate()?;
    if features.n_rows() != nodes.len() || mask.len() != nodes.len() {
        return Err(Error::Internal("feature, node and mask sizes differ".into()));
    }
    let index = CosineIndex::new(&features);
    let mut stats = TopologyStats::default();
    let mut parts = Vec::new();
    if cfg.enable_align {
        let e = mnn_edges(&index, nodes, compat, cfg.k_align, cfg.restrict_align_to_compatible);
        stats.align = e.len();
        parts.push((Provenance::ALIGN, e));
    }
    if cfg.enable_onto {
        let e = onto_edges(&index, nodes, mask, cfg.k_onto);
        stats.onto = e.len();
        parts.push((Provenance::ONTO, e));
    }
    if cfg.enable_phy {
        let e = phylo_edges(&index, nodes, compat, cfg.k_phy);
        stats.phy = e.len();
        parts.push((Provenance::PHY, e));
    }
    stats.peak_edge_records = stats.align + stats.onto + stats.phy;
    let view = features.view();
    let graph = CellGraph::from_tagged(features, view, parts)?;
    if graph.edges.is_empty() {
        log::warn!("graph has no edges");
    }
    stats.peak_edge_records = stats.peak_edge_records.max(graph.edges.len());
    Ok((graph, stats))
}

/// Adds QueryAttach edges from every Query cell to its `k` most similar
/// Reference cells of compatible species. Reference-internal edges are
/// unchanged.
pub fn attach_query(
    graph: CellGraph,
    nodes: &NodeTable,
    compat: &CompatibilityMatrix,
    k: usize,
    stats: &mut TopologyStats,
) -> Result<CellGraph> {
    if k == 0 {
        return Err(Error::Config("k_align must be at least 1".into()));
    }
    if let Some(&s) = nodes.species.iter().find(|&&s| s as usize >= compat.species.len()) {
        return Err(Error::UnknownSpecies(format!("species index {s}")));
    }
    let index = CosineIndex::new(&graph.node_features);
    let attach = query_attach_edges(&index, nodes, compat, k);
    stats.query_attach = attach.len();
    stats.peak_edge_records = stats.peak_edge_records.max(graph.edges.len() + attach.len());
    let CellGraph {
        node_features,
        similarity_view,
        edges,
    } = graph;
    let mut parts: Vec<(Provenance, Vec<(u32, u32)>)> = Vec::new();
    for tag in [Provenance::ALIGN, Provenance::ONTO, Provenance::PHY] {
        parts.push((
            tag,
            edges
                .iter()
                .filter(|e| e.provenance.contains(tag))
                .map(|e| (e.u, e.v))
                .collect(),
        ));
    }
    parts.push((Provenance::QUERY_ATTACH, attach));
    CellGraph::from_tagged(node_features, similarity_view, parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_text_round_trip() {
        for bits in 0u8..16 {
            let p = Provenance::from_bits(bits).unwrap();
            assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
        }
        assert_eq!((Provenance::ALIGN | Provenance::ONTO).to_string(), "Align|Onto");
        assert!("Bogus".parse::<Provenance>().is_err());
    }

    #[test]
    fn union_merges_tags() {
        let f = FeatureMatrix::empty(4, View::Fused);
        let g = CellGraph::from_tagged(
            f,
            View::Fused,
            vec![
                (Provenance::ALIGN, vec![(0, 1), (2, 3)]),
                (Provenance::ONTO, vec![(0, 1)]),
            ],
        )
        .unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.edges()[0].provenance, Provenance::ALIGN | Provenance::ONTO);
        assert_eq!(g.count_with(Provenance::ONTO), 1);
        assert_eq!(g.count_with(Provenance::ALIGN), 2);
    }

    #[test]
    fn rejects_self_loops() {
        let f = FeatureMatrix::empty(2, View::Fused);
        assert!(CellGraph::from_tagged(f, View::Fused, vec![(Provenance::PHY, vec![(1, 1)])]).is_err());
    }
}
