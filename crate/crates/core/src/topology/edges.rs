//! The edge sub-sets. Every function returns canonical `(u, v)` pairs with
//! `u < v`, sorted and deduplicated.

use rayon::prelude::*;

use super::knn::{CosineIndex, TopK};
use super::NodeTable;
use crate::ontology::{CompatibilityMatrix, SemanticMask};

fn canonical(mut pairs: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
    for p in pairs.iter_mut() {
        if p.0 > p.1 {
            *p = (p.1, p.0);
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Per-node Top-K over `eligible`, keeping candidates `j != i` that pass
/// `accept(i, j)`. Output is indexed like `eligible`.
fn selective_topk<F>(index: &CosineIndex, eligible: &[u32], k: usize, accept: F) -> Vec<Vec<u32>>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    eligible
        .par_iter()
        .map(|&i| {
            let i = i as usize;
            let mut top = TopK::new(k);
            for &j in eligible {
                let j = j as usize;
                if j != i && accept(i, j) {
                    top.offer(index.similarity(i, j), j as u32);
                }
            }
            top.indices()
        })
        .collect()
}

fn symmetrize(eligible: &[u32], lists: Vec<Vec<u32>>) -> Vec<(u32, u32)> {
    let pairs = eligible
        .iter()
        .zip(lists)
        .flat_map(|(&i, l)| l.into_iter().map(move |j| (i, j)))
        .collect();
    canonical(pairs)
}

/// Mutual nearest neighbours across domains among Reference cells.
///
/// A cell keeps a separate Top-`k` list per foreign domain. With
/// `restrict_to_compatible`, candidates of incompatible species are
/// excluded before ranking.
pub fn mnn_edges(
    index: &CosineIndex,
    nodes: &NodeTable,
    compat: &CompatibilityMatrix,
    k: usize,
    restrict_to_compatible: bool,
) -> Vec<(u32, u32)> {
    let eligible = nodes.reference_cells();
    let n_domains = nodes.n_domains();
    // lists[i][d]: i's Top-K inside domain d.
    let lists: Vec<Vec<Vec<u32>>> = eligible
        .par_iter()
        .map(|&i| {
            let i = i as usize;
            let mut per_domain: Vec<TopK> = (0..n_domains).map(|_| TopK::new(k)).collect();
            for &j in &eligible {
                let j = j as usize;
                if nodes.domain[j] == nodes.domain[i] {
                    continue;
                }
                if restrict_to_compatible && !compat.allows(nodes.species[i] as usize, nodes.species[j] as usize) {
                    continue;
                }
                per_domain[nodes.domain[j] as usize].offer(index.similarity(i, j), j as u32);
            }
            per_domain.iter().map(TopK::indices).collect()
        })
        .collect();
    let mut slot = vec![usize::MAX; nodes.len()];
    for (s, &i) in eligible.iter().enumerate() {
        slot[i as usize] = s;
    }
    let mut pairs = Vec::new();
    for (s, &i) in eligible.iter().enumerate() {
        let di = nodes.domain[i as usize] as usize;
        for per in &lists[s] {
            for &j in per {
                if i < j && lists[slot[j as usize]][di].contains(&i) {
                    pairs.push((i, j));
                }
            }
        }
    }
    canonical(pairs)
}

/// Top-`k` neighbours under the semantic mask among labeled Reference cells.
pub fn onto_edges(index: &CosineIndex, nodes: &NodeTable, mask: &SemanticMask, k: usize) -> Vec<(u32, u32)> {
    let eligible: Vec<u32> = nodes
        .reference_cells()
        .into_iter()
        .filter(|&i| mask.is_labeled(i as usize))
        .collect();
    let lists = selective_topk(index, &eligible, k, |i, j| mask.allows(i, j));
    for (&i, l) in eligible.iter().zip(&lists) {
        if l.is_empty() {
            log::debug!("cell {i} has no ontology-compatible candidates");
        }
    }
    symmetrize(&eligible, lists)
}

/// Top-`k` neighbours of a different, compatible species among Reference
/// cells.
///
/// One radius, one `k`. Tiered radii compose from this: call once per
/// distance band with a matrix whose `allowed` admits only that band's
/// species pairs, each with its own `k`, and union the results.
pub fn phylo_edges(index: &CosineIndex, nodes: &NodeTable, compat: &CompatibilityMatrix, k: usize) -> Vec<(u32, u32)> {
    let eligible = nodes.reference_cells();
    let lists = selective_topk(index, &eligible, k, |i, j| {
        let (si, sj) = (nodes.species[i] as usize, nodes.species[j] as usize);
        si != sj && compat.allows(si, sj)
    });
    symmetrize(&eligible, lists)
}

/// Plain symmetrized Top-`k` cosine graph over `eligible`, ignoring all
/// priors. Used as the comparison baseline.
pub fn knn_edges(index: &CosineIndex, eligible: &[u32], k: usize) -> Vec<(u32, u32)> {
    let lists = selective_topk(index, eligible, k, |_, _| true);
    symmetrize(eligible, lists)
}

/// Top-`k` Reference neighbours of compatible species for each Query cell.
/// No labels are consulted.
pub fn query_attach_edges(
    index: &CosineIndex,
    nodes: &NodeTable,
    compat: &CompatibilityMatrix,
    k: usize,
) -> Vec<(u32, u32)> {
    let reference = nodes.reference_cells();
    let queries = nodes.query_cells();
    let lists: Vec<Vec<u32>> = queries
        .par_iter()
        .map(|&q| {
            let q = q as usize;
            let mut top = TopK::new(k);
            for &j in &reference {
                if compat.allows(nodes.species[q] as usize, nodes.species[j as usize] as usize) {
                    top.offer(index.similarity(q, j as usize), j);
                }
            }
            top.indices()
        })
        .collect();
    symmetrize(&queries, lists)
}
