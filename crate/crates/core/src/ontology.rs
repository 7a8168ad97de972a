//! Distance and masking queries over the cell ontology and the species tree.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{OntologyDag, PhyloTree};

/// Hop distances from `source` to every term, treating `is_a` edges as
/// undirected unit-weight edges. `None` marks unreachable terms.
pub fn co_distances_from(dag: &OntologyDag, source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; dag.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(t) = queue.pop_front() {
        let d = dist[t].expect("queued terms have a distance") + 1;
        for &n in dag.parents(t).iter().chain(dag.children(t)) {
            if dist[n].is_none() {
                dist[n] = Some(d);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Undirected hop distance between two terms; `Ok(None)` if disconnected.
pub fn co_distance(dag: &OntologyDag, a: &str, b: &str) -> Result<Option<u32>> {
    let ia = dag.index_of(a).ok_or_else(|| Error::UnknownTerm(a.to_string()))?;
    let ib = dag.index_of(b).ok_or_else(|| Error::UnknownTerm(b.to_string()))?;
    Ok(co_distances_from(dag, ia)[ib])
}

/// Precomputed pairwise "label distance ≤ threshold" predicate over cells.
///
/// Only labels that are visible to graph construction are stored; a cell
/// without a visible label never matches anything.
#[derive(Debug, Clone)]
pub struct SemanticMask {
    cell_label: Vec<Option<u32>>,
    n_labels: usize,
    allowed: Vec<bool>,
    threshold: u32,
}

impl SemanticMask {
    pub fn new(dag: &OntologyDag, labels: &[Option<&str>], threshold: u32) -> Result<Self> {
        let mut distinct: Vec<usize> = Vec::new();
        let mut cell_label = Vec::with_capacity(labels.len());
        for l in labels {
            match l {
                None => cell_label.push(None),
                Some(id) => {
                    let t = dag.index_of(id).ok_or_else(|| Error::UnknownTerm(id.to_string()))?;
                    let slot = match distinct.iter().position(|&x| x == t) {
                        Some(p) => p,
                        None => {
                            distinct.push(t);
                            distinct.len() - 1
                        }
                    };
                    cell_label.push(Some(slot as u32));
                }
            }
        }
        let n = distinct.len();
        let mut allowed = vec![false; n * n];
        for (a, &ta) in distinct.iter().enumerate() {
            let d = co_distances_from(dag, ta);
            for (b, &tb) in distinct.iter().enumerate() {
                allowed[a * n + b] = d[tb].is_some_and(|x| x <= threshold);
            }
        }
        Ok(SemanticMask {
            cell_label,
            n_labels: n,
            allowed,
            threshold,
        })
    }

    #[inline]
    pub fn allows(&self, i: usize, j: usize) -> bool {
        match (self.cell_label[i], self.cell_label[j]) {
            (Some(a), Some(b)) => self.allowed[a as usize * self.n_labels + b as usize],
            _ => false,
        }
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.cell_label[i].is_some()
    }

    pub fn len(&self) -> usize {
        self.cell_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_label.is_empty()
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }
}

/// Evolutionary distance between two species (leaf names).
pub fn phylo_distance(tree: &PhyloTree, a: &str, b: &str) -> Result<f64> {
    let ia = tree.leaf(a).ok_or_else(|| Error::UnknownSpecies(a.to_string()))?;
    let ib = tree.leaf(b).ok_or_else(|| Error::UnknownSpecies(b.to_string()))?;
    Ok(tree.path_length(ia, ib))
}

/// Largest leaf-to-leaf distance in the tree.
pub fn tree_diameter(tree: &PhyloTree) -> f64 {
    let leaves: Vec<usize> = tree.leaf_names().iter().filter_map(|n| tree.leaf(n)).collect();
    let mut best = 0.0f64;
    for (x, &a) in leaves.iter().enumerate() {
        for &b in &leaves[x + 1..] {
            best = best.max(tree.path_length(a, b));
        }
    }
    best
}

/// Radius used when the tree has no explicit branch lengths and none was
/// configured: two hops, i.e. sister species.
pub const HOP_MODE_DEFAULT_RADIUS: f64 = 2.0;

/// Resolves the configured radius. Without explicit branch lengths the
/// hop-mode default applies; with real lengths a value is required.
pub fn resolve_radius(tree: &PhyloTree, configured: Option<f64>) -> Result<f64> {
    match configured {
        Some(d) if d >= 0.0 && d.is_finite() => Ok(d),
        Some(d) => Err(Error::Config(format!("radius must be finite and non-negative, got {d}"))),
        None if tree.all_lengths_defaulted() => Ok(HOP_MODE_DEFAULT_RADIUS),
        None => Err(Error::Config(
            "the species tree has branch lengths, so topology.delta must be set".into(),
        )),
    }
}

/// Boolean species × species matrix of pairs within the radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityMatrix {
    pub species: Vec<String>,
    pub radius: f64,
    pub distance: Vec<Vec<f64>>,
    pub allowed: Vec<Vec<bool>>,
}

impl CompatibilityMatrix {
    pub fn new(tree: &PhyloTree, species: &[String], radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Config(format!("radius must be non-negative, got {radius}")));
        }
        let idx = species
            .iter()
            .map(|s| tree.leaf(s).ok_or_else(|| Error::UnknownSpecies(s.clone())))
            .collect::<Result<Vec<_>>>()?;
        let n = species.len();
        let mut distance = vec![vec![0.0; n]; n];
        let mut allowed = vec![vec![false; n]; n];
        for a in 0..n {
            for b in a..n {
                let d = tree.path_length(idx[a], idx[b]);
                distance[a][b] = d;
                distance[b][a] = d;
                let ok = a == b || d <= radius;
                allowed[a][b] = ok;
                allowed[b][a] = ok;
            }
        }
        Ok(CompatibilityMatrix {
            species: species.to_vec(),
            radius,
            distance,
            allowed,
        })
    }

    pub fn index_of(&self, species: &str) -> Option<usize> {
        self.species.iter().position(|s| s == species)
    }

    #[inline]
    pub fn allows(&self, a: usize, b: usize) -> bool {
        self.allowed[a][b]
    }

    /// Tab-separated dump with a header row of species names.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("species");
        for s in &self.species {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');
        for (a, s) in self.species.iter().enumerate() {
            out.push_str(s);
            for b in 0..self.species.len() {
                let _ = write!(out, "\t{}", u8::from(self.allowed[a][b]));
            }
            out.push('\n');
        }
        out
    }
}
