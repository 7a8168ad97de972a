//! Graph probes: label-propagation classification and community detection.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CLASSIFY_MAX_ITERATIONS: usize = 50;
pub const CLUSTER_MAX_ROUNDS: usize = 100;

/// Fills `best` with the most frequent labels in `votes`, ascending.
fn tied_best(votes: &mut [u32], best: &mut Vec<u32>) {
    votes.sort_unstable();
    best.clear();
    let mut best_count = 0;
    for run in votes.chunk_by(|a, b| a == b) {
        if run.len() > best_count {
            best_count = run.len();
            best.clear();
        }
        if run.len() == best_count {
            best.push(run[0]);
        }
    }
}

/// Most frequent label among `votes`; `current` wins a tie it takes part in,
/// otherwise the lowest tied label.
fn majority(votes: &mut [u32], current: Option<u32>) -> Option<u32> {
    let mut best = Vec::new();
    tied_best(votes, &mut best);
    match current {
        Some(c) if best.contains(&c) => Some(c),
        _ => best.first().copied(),
    }
}

/// Synchronous neighbourhood majority vote with `seeds` clamped. Nodes that
/// never receive a label fall back to the most common seed label (lowest on
/// ties).
pub fn label_propagation_classify(adjacency: &[Vec<u32>], seeds: &[Option<u32>]) -> Result<Vec<u32>> {
    if adjacency.len() != seeds.len() {
        return Err(Error::Internal("adjacency and seed lengths differ".into()));
    }
    let mut seed_labels: Vec<u32> = seeds.iter().flatten().copied().collect();
    let fallback = majority(&mut seed_labels, None).ok_or_else(|| Error::Data("no labeled cells to propagate from".into()))?;
    let mut current: Vec<Option<u32>> = seeds.to_vec();
    let mut votes = Vec::new();
    for _ in 0..CLASSIFY_MAX_ITERATIONS {
        let mut next = current.clone();
        let mut changed = false;
        for (i, nbrs) in adjacency.iter().enumerate() {
            if seeds[i].is_some() {
                continue;
            }
            votes.clear();
            votes.extend(nbrs.iter().filter_map(|&j| current[j as usize]));
            if let Some(l) = majority(&mut votes, current[i]) {
                if current[i] != Some(l) {
                    next[i] = Some(l);
                    changed = true;
                }
            }
        }
        current = next;
        if !changed {
            break;
        }
    }
    Ok(current.into_iter().map(|l| l.unwrap_or(fallback)).collect())
}

/// Asynchronous label-propagation communities. Visit order is reshuffled
/// each round from `seed`; a node keeps its community when it is among the
/// tied best, otherwise a tied label is drawn from the same stream.
/// Community ids are numbered by first appearance.
pub fn cluster(adjacency: &[Vec<u32>], seed: u64) -> Vec<u32> {
    let n = adjacency.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut label: Vec<u32> = (0..n as u32).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut votes = Vec::new();
    let mut best: Vec<u32> = Vec::new();
    for _ in 0..CLUSTER_MAX_ROUNDS {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            if adjacency[i].is_empty() {
                continue;
            }
            votes.clear();
            votes.extend(adjacency[i].iter().map(|&j| label[j as usize]));
            tied_best(&mut votes, &mut best);
            if best.contains(&label[i]) {
                continue;
            }
            let pick = *best.choose(&mut rng).expect("nonempty neighbourhood");
            label[i] = pick;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    relabel_by_first_appearance(&label)
}

pub fn relabel_by_first_appearance(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}
