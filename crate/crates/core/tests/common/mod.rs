//! Independent O(n²) reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use dogma_core::features::{FeatureMatrix, View};
use dogma_core::ingest::{CellMetadata, CellRecord, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        -1.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Sort every candidate by (similarity desc, index asc), keep the first k.
pub fn topk(x: &FeatureMatrix, i: usize, candidates: impl IntoIterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates.into_iter().map(|j| (cosine(x.row(i), x.row(j)), j)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, j)| j).collect()
}

pub fn random_features(seed: u64, n: usize, dim: usize, clusters: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters.max(1))
        .map(|_| (0..dim).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut values = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        values.extend(c.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
    }
    FeatureMatrix::new(n, dim, values, View::Fused, (0..dim).map(|j| format!("f{j}")).collect()).unwrap()
}

pub struct CellSpec {
    pub species: usize,
    pub domain: usize,
    pub label: Option<usize>,
    pub reference: bool,
}

/// Metadata with species `sp{s}`, domains `d{d}`, and labels `t{l}`.
pub fn metadata(cells: &[CellSpec]) -> CellMetadata {
    CellMetadata::new(
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| CellRecord {
                cell_id: format!("c{i}"),
                species: format!("sp{}", c.species),
                cell_type: c.label.map(|l| format!("t{l}")),
                domain: format!("d{}", c.domain),
                split: if c.reference { Split::Reference } else { Split::Query },
            })
            .collect(),
    )
}

pub fn pair(i: usize, j: usize) -> (u32, u32) {
    (i.min(j) as u32, i.max(j) as u32)
}

pub fn mnn(
    x: &FeatureMatrix,
    cells: &[CellSpec],
    k: usize,
    compatible: impl Fn(usize, usize) -> bool,
) -> BTreeSet<(u32, u32)> {
    let dom = |i: usize| (cells[i].species, cells[i].domain);
    let n = cells.len();
    // Each (cell, foreign domain) list is computed once.
    let mut lists: HashMap<(usize, (usize, usize)), Vec<usize>> = HashMap::new();
    let mut list = |i: usize, d: (usize, usize)| -> Vec<usize> {
        lists
            .entry((i, d))
            .or_insert_with(|| {
                topk(
                    x,
                    i,
                    (0..n).filter(|&j| {
                        cells[j].reference
                            && dom(j) == d
                            && dom(j) != dom(i)
                            && compatible(cells[i].species, cells[j].species)
                    }),
                    k,
                )
            })
            .clone()
    };
    let mut out = BTreeSet::new();
    for i in (0..n).filter(|&i| cells[i].reference) {
        for j in (i + 1..n).filter(|&j| cells[j].reference && dom(j) != dom(i)) {
            if list(i, dom(j)).contains(&j) && list(j, dom(i)).contains(&i) {
                out.insert(pair(i, j));
            }
        }
    }
    out
}

pub fn masked_knn(
    x: &FeatureMatrix,
    cells: &[CellSpec],
    k: usize,
    eligible: impl Fn(usize) -> bool,
    allowed: impl Fn(usize, usize) -> bool,
) -> BTreeSet<(u32, u32)> {
    let n = cells.len();
    let mut out = BTreeSet::new();
    for i in (0..n).filter(|&i| eligible(i)) {
        for j in topk(x, i, (0..n).filter(|&j| j != i && eligible(j) && allowed(i, j)), k) {
            out.insert(pair(i, j));
        }
    }
    out
}

/// ARI by enumerating all item pairs.
pub fn ari_pairs(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / total;
    let max = (only_a + only_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn mutual_information(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    let mut mi = 0.0;
    let la: BTreeSet<u32> = a.iter().copied().collect();
    let lb: BTreeSet<u32> = b.iter().copied().collect();
    for &x in &la {
        for &y in &lb {
            let nij = a.iter().zip(b).filter(|&(&p, &q)| p == x && q == y).count() as f64;
            if nij == 0.0 {
                continue;
            }
            let ai = a.iter().filter(|&&p| p == x).count() as f64;
            let bj = b.iter().filter(|&&q| q == y).count() as f64;
            mi += nij / n * (n * nij / (ai * bj)).ln();
        }
    }
    mi
}

fn entropy(a: &[u32]) -> f64 {
    let n = a.len() as f64;
    let labels: BTreeSet<u32> = a.iter().copied().collect();
    labels
        .iter()
        .map(|&l| {
            let p = a.iter().filter(|&&x| x == l).count() as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Visits every permutation of `items` (Heap's algorithm).
fn for_each_permutation(items: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// AMI with the expectation taken as the exact average of MI over every
/// reordering of `b`. Only for small `n`.
pub fn ami_permutation(a: &[u32], b: &[u32]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0.0;
    let mut perm = b.to_vec();
    for_each_permutation(&mut perm, &mut |p| {
        sum += mutual_information(a, p);
        count += 1.0;
    });
    let emi = sum / count;
    let denom = entropy(a).max(entropy(b)) - emi;
    if denom == 0.0 {
        return 1.0;
    }
    (mutual_information(a, b) - emi) / denom
}
