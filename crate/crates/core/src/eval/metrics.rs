//! Chance-adjusted partition agreement.

use std::collections::HashMap;

/// Contingency counts between two labelings, with row and column sums.
struct Contingency {
    n: usize,
    /// Nonzero cells as ((row, col), count), sorted.
    cells: Vec<((usize, usize), usize)>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Contingency {
    fn new(a: &[u32], b: &[u32]) -> Self {
        assert_eq!(a.len(), b.len(), "partitions cover different cell sets");
        let mut ra: HashMap<u32, usize> = HashMap::new();
        let mut rb: HashMap<u32, usize> = HashMap::new();
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for (&x, &y) in a.iter().zip(b) {
            let i = *ra.entry(x).or_insert_with(|| {
                rows.push(0);
                rows.len() - 1
            });
            let j = *rb.entry(y).or_insert_with(|| {
                cols.push(0);
                cols.len() - 1
            });
            rows[i] += 1;
            cols[j] += 1;
            *pairs.entry((i, j)).or_insert(0) += 1;
        }
        let mut cells: Vec<((usize, usize), usize)> = pairs.into_iter().collect();
        cells.sort_unstable();
        Contingency {
            n: a.len(),
            cells,
            rows,
            cols,
        }
    }

    /// Every nonzero cell fills its whole row and column: the partitions
    /// agree up to relabeling.
    fn is_bijection(&self) -> bool {
        self.cells.len() == self.rows.len() && self.cells.len() == self.cols.len()
    }
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Agreeing partitions and degenerate inputs with a
/// zero denominator score 1.0.
pub fn ari(a: &[u32], b: &[u32]) -> f64 {
    let t = Contingency::new(a, b);
    if t.is_bijection() {
        return 1.0;
    }
    let index: f64 = t.cells.iter().map(|&(_, c)| comb2(c)).sum();
    let sa: f64 = t.rows.iter().map(|&c| comb2(c)).sum();
    let sb: f64 = t.cols.iter().map(|&c| comb2(c)).sum();
    let expected = sa * sb / comb2(t.n);
    let max = 0.5 * (sa + sb);
    let denom = max - expected;
    if denom == 0.0 {
        return 1.0;
    }
    (index - expected) / denom
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// ln(k!) for k in 0..=n.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Expected mutual information of two labelings with the given marginals
/// under the hypergeometric (permutation) model.
pub fn expected_mutual_information(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let lf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with max-entropy normalization.
/// Agreeing partitions, including single cluster against single cluster,
/// score 1.0.
pub fn ami(a: &[u32], b: &[u32]) -> f64 {
    let t = Contingency::new(a, b);
    if t.is_bijection() {
        return 1.0;
    }
    let n = t.n as f64;
    let ha = entropy(&t.rows, n);
    let hb = entropy(&t.cols, n);
    let mi: f64 = t
        .cells
        .iter()
        .map(|&((i, j), c)| {
            let c = c as f64;
            c / n * (n * c / (t.rows[i] as f64 * t.cols[j] as f64)).ln()
        })
        .sum();
    let emi = expected_mutual_information(&t.rows, &t.cols, t.n);
    let denom = ha.max(hb) - emi;
    if denom == 0.0 {
        return 1.0;
    }
    (mi - emi) / denom
}
