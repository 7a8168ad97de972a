//! Exact cosine top-K search.

use rayon::prelude::*;

use crate::features::FeatureMatrix;
use crate::numeric::dot;

/// Row-normalized copy of a feature matrix for cosine similarity. Rows of
/// zero norm have similarity −1 to everything.
#[derive(Debug, Clone)]
pub struct CosineIndex {
    dim: usize,
    unit: Vec<f64>,
    zero: Vec<bool>,
}

impl CosineIndex {
    pub fn new(x: &FeatureMatrix) -> Self {
        let dim = x.dim();
        let mut unit = Vec::with_capacity(x.n_rows() * dim);
        let mut zero = Vec::with_capacity(x.n_rows());
        for i in 0..x.n_rows() {
            let row = x.row(i);
            let norm = dot(row, row).sqrt();
            zero.push(norm == 0.0);
            if norm == 0.0 {
                unit.extend(std::iter::repeat_n(0.0, dim));
            } else {
                unit.extend(row.iter().map(|v| v / norm));
            }
        }
        CosineIndex { dim, unit, zero }
    }

    pub fn len(&self) -> usize {
        self.zero.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zero.is_empty()
    }

    #[inline]
    fn unit_row(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        if self.zero[i] || self.zero[j] {
            return -1.0;
        }
        dot(self.unit_row(i), self.unit_row(j))
    }
}

/// Bounded best-first list: higher similarity first, lower index on ties.
#[derive(Debug, Clone)]
pub(crate) struct TopK {
    k: usize,
    items: Vec<(f64, u32)>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn beats(a: (f64, u32), b: (f64, u32)) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    #[inline]
    pub(crate) fn offer(&mut self, sim: f64, j: u32) {
        if self.k == 0 {
            return;
        }
        if self.items.len() == self.k && !Self::beats((sim, j), *self.items.last().expect("full list")) {
            return;
        }
        let pos = self.items.partition_point(|&it| Self::beats(it, (sim, j)));
        self.items.insert(pos, (sim, j));
        self.items.truncate(self.k);
    }

    pub(crate) fn indices(&self) -> Vec<u32> {
        self.items.iter().map(|&(_, j)| j).collect()
    }
}

/// For each node, the `k` candidates with the highest cosine similarity,
/// best first, ties broken by lower index. Fewer than `k` candidates are
/// all returned.
pub fn cosine_topk(x: &FeatureMatrix, candidates: &[Vec<usize>], k: usize) -> Vec<Vec<usize>> {
    let index = CosineIndex::new(x);
    candidates
        .par_iter()
        .enumerate()
        .map(|(i, cands)| {
            let mut top = TopK::new(k);
            for &j in cands {
                top.offer(index.similarity(i, j), j as u32);
            }
            top.indices().into_iter().map(|j| j as usize).collect()
        })
        .collect()
}
