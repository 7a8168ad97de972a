//! Principal component analysis fit on a subset of rows (the Reference
//! cells) and applied unchanged to any other rows.
//!
//! Two solvers share one interface: an exact symmetric eigendecomposition
//! of the gene covariance, and seeded randomized subspace iteration for
//! wide matrices. Both apply the same sign convention.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureConfig, FeatureMatrix, View};
use crate::error::{Error, Result};
use crate::ingest::{ExpressionMatrix, NormalizationState};
use crate::numeric::dot;

/// Above this many genes `Auto` switches to the randomized solver.
pub const EXACT_PCA_MAX_GENES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSolver {
    Auto,
    Exact,
    Randomized,
}

/// Eigenvalues below this fraction of the largest one count as zero rank.
const RANK_TOL: f64 = 1e-10;
const OVERSAMPLE: usize = 10;
const MAX_SUBSPACE_ITERS: usize = 500;
const RESIDUAL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub gene_ids: Vec<String>,
    pub mean: Vec<f64>,
    /// One row per component, each of length `gene_ids.len()`. Components
    /// beyond the numeric rank are all-zero.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub solver: PcaSolver,
    pub rank: usize,
}

impl PcaModel {
    /// Projects every row of `matrix` onto the fitted components. Each row
    /// is computed independently, so adding rows never changes the others.
    pub fn transform(&self, matrix: &ExpressionMatrix) -> Result<FeatureMatrix> {
        if matrix.gene_ids() != self.gene_ids.as_slice() {
            return Err(Error::Data("matrix genes differ from the PCA fit".into()));
        }
        let d = self.components.len();
        let mut values = Vec::with_capacity(matrix.n_cells() * d);
        let mut centered = vec![0.0; self.mean.len()];
        for c in 0..matrix.n_cells() {
            for (x, m) in centered.iter_mut().zip(&self.mean) {
                *x = -m;
            }
            let (idx, vals) = matrix.row(c);
            for (&g, &v) in idx.iter().zip(vals) {
                centered[g as usize] += v;
            }
            for comp in &self.components {
                values.push(dot(&centered, comp));
            }
        }
        let labels = (1..=d).map(|k| format!("PC{k}")).collect();
        FeatureMatrix::new(matrix.n_cells(), d, values, View::Observation, labels)
    }
}

fn centered_dense(matrix: &ExpressionMatrix, rows: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let g = matrix.n_genes();
    let mut x = DMatrix::<f64>::zeros(rows.len(), g);
    for (r, &c) in rows.iter().enumerate() {
        let (idx, vals) = matrix.row(c);
        for (&j, &v) in idx.iter().zip(vals) {
            x[(r, j as usize)] = v;
        }
    }
    let mut mean = vec![0.0; g];
    for (j, m) in mean.iter_mut().enumerate() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        *m = crate::numeric::mean(&col);
    }
    for j in 0..g {
        let m = mean[j];
        for v in x.column_mut(j).iter_mut() {
            *v -= m;
        }
    }
    (x, mean)
}

/// Flips a component so its largest-magnitude loading is positive; the
/// first such loading wins ties.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Sorted `(eigenvalue, eigenvector)` pairs, largest first.
fn sorted_eigen(sym: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

fn exact_components(x: &DMatrix<f64>, d: usize) -> Vec<(f64, Vec<f64>)> {
    let denom = (x.nrows().max(2) - 1) as f64;
    let cov = x.tr_mul(x) / denom;
    let mut pairs = sorted_eigen(cov);
    pairs.truncate(d);
    pairs
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Subspace iteration on `C = XᵀX / (n-1)` with Rayleigh–Ritz extraction,
/// iterated until the top `d` Ritz pairs have small residuals.
fn randomized_components(x: &DMatrix<f64>, d: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let g = x.ncols();
    let l = (d + OVERSAMPLE).min(g);
    let denom = (x.nrows().max(2) - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::<f64>::from_fn(g, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(omega);
    let apply = |q: &DMatrix<f64>| -> DMatrix<f64> { x.tr_mul(&(x * q)) / denom };
    let mut result = Vec::new();
    for iter in 0..MAX_SUBSPACE_ITERS {
        let z = apply(&q);
        let b = q.tr_mul(&z);
        let b = (&b + b.transpose()) * 0.5;
        let pairs = sorted_eigen(b);
        let top = pairs.first().map_or(0.0, |p| p.0.abs()).max(f64::MIN_POSITIVE);
        let mut converged = true;
        result.clear();
        for (theta, w) in pairs.iter().take(d) {
            let w = DMatrix::from_column_slice(l, 1, w);
            let v = &q * &w;
            let r = &z * &w - &v * *theta;
            if r.norm() > RESIDUAL_TOL * top {
                converged = false;
            }
            result.push((*theta, v.iter().copied().collect()));
        }
        if converged {
            log::debug!("randomized PCA converged after {} iterations", iter + 1);
            break;
        }
        q = orthonormalize(z);
    }
    result
}

/// Fits PCA on `fit_rows` of a log-normalized matrix and projects all rows.
pub fn pca(
    matrix: &ExpressionMatrix,
    fit_rows: &[usize],
    cfg: &FeatureConfig,
) -> Result<(FeatureMatrix, PcaModel, Vec<String>)> {
    if matrix.state() != NormalizationState::LogNormalized {
        return Err(Error::Data("PCA expects a log-normalized matrix".into()));
    }
    if fit_rows.is_empty() {
        return Err(Error::Data("PCA needs at least one row to fit".into()));
    }
    let d = cfg.pca_dim;
    if d > fit_rows.len().min(matrix.n_genes()) {
        return Err(Error::Config(format!(
            "pca_dim {d} exceeds min(cells, genes) = {}",
            fit_rows.len().min(matrix.n_genes())
        )));
    }
    let solver = match cfg.pca_solver {
        PcaSolver::Auto if matrix.n_genes() > EXACT_PCA_MAX_GENES => PcaSolver::Randomized,
        PcaSolver::Auto => PcaSolver::Exact,
        s => s,
    };
    let (x, mean) = centered_dense(matrix, fit_rows);
    let pairs = match solver {
        PcaSolver::Randomized => randomized_components(&x, d, cfg.pca_seed),
        _ => exact_components(&x, d),
    };
    let top = pairs.first().map_or(0.0, |p| p.0).max(0.0);
    let mut notes = Vec::new();
    let mut components = Vec::with_capacity(d);
    let mut explained = Vec::with_capacity(d);
    let mut rank = 0;
    for (lambda, mut v) in pairs {
        if top > 0.0 && lambda > RANK_TOL * top {
            fix_sign(&mut v);
            components.push(v);
            explained.push(lambda);
            rank += 1;
        } else {
            components.push(vec![0.0; matrix.n_genes()]);
            explained.push(0.0);
        }
    }
    if rank < d {
        let note = format!("data rank {rank} is below pca_dim {d}; trailing components are zero");
        warn!("{note}");
        notes.push(note);
    }
    let model = PcaModel {
        gene_ids: matrix.gene_ids().to_vec(),
        mean,
        components,
        explained_variance: explained,
        solver,
        rank,
    };
    let features = model.transform(matrix)?;
    Ok((features, model, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::log_normalize;
    use crate::ingest::NormalizationState;
    use rand::{Rng, SeedableRng};

    fn log_matrix(rows: Vec<Vec<f64>>) -> ExpressionMatrix {
        let n = rows.len();
        let g = rows[0].len();
        let trip: Vec<(usize, usize, f64)> = rows
            .iter()
            .enumerate()
            .flat_map(|(c, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, &v)| (c, j, v)))
            .collect();
        ExpressionMatrix::from_triplets(
            (0..n).map(|i| format!("c{i}")).collect(),
            (0..g).map(|j| format!("g{j}")).collect(),
            trip,
            NormalizationState::LogNormalized,
        )
        .unwrap()
    }

    fn random_log(seed: u64, n: usize, g: usize) -> ExpressionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for c in 0..n {
            for j in 0..g {
                if rng.random::<f64>() < 0.4 {
                    // Low-rank-ish structure plus noise.
                    let v = 1.0 + ((c % 4) as f64) * ((j % 5) as f64) * 0.3 + rng.random::<f64>();
                    trip.push((c, j, v * 3.0));
                }
            }
        }
        let raw = ExpressionMatrix::from_triplets(
            (0..n).map(|i| format!("c{i}")).collect(),
            (0..g).map(|j| format!("g{j}")).collect(),
            trip,
            NormalizationState::Raw,
        )
        .unwrap();
        log_normalize(raw, 1e4).unwrap().0
    }

    #[test]
    fn rank_one_line() {
        let dir = [1.0, 2.0, -0.5, 0.25];
        let rows: Vec<Vec<f64>> = (0..20).map(|t| dir.iter().map(|d| 10.0 + d * t as f64).collect()).collect();
        let m = log_matrix(rows);
        let cfg = FeatureConfig { pca_dim: 3, ..FeatureConfig::default() };
        let all: Vec<usize> = (0..20).collect();
        let (f, model, notes) = pca(&m, &all, &cfg).unwrap();
        let total: f64 = model.explained_variance.iter().sum();
        assert!(model.explained_variance[0] / total >= 0.9999);
        assert_eq!(model.rank, 1);
        assert_eq!(notes.len(), 1);
        for i in 0..20 {
            assert!(f.get(i, 1).abs() < 1e-9 && f.get(i, 2).abs() < 1e-9);
        }
        // Largest loading (gene 1, weight 2.0) is positive.
        assert!(model.components[0][1] > 0.0);
    }

    #[test]
    fn components_orthonormal_and_variance_sorted() {
        let m = random_log(3, 60, 25);
        let cfg = FeatureConfig { pca_dim: 10, ..FeatureConfig::default() };
        let all: Vec<usize> = (0..60).collect();
        let (_, model, _) = pca(&m, &all, &cfg).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let d = dot(&model.components[a], &model.components[b]);
                if a == b {
                    assert!((d - 1.0).abs() < 1e-10);
                } else {
                    assert!(d.abs() < 1e-8);
                }
            }
        }
        assert!(model.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn query_rows_do_not_move_reference_projections() {
        let m = random_log(4, 50, 20);
        let cfg = FeatureConfig { pca_dim: 5, ..FeatureConfig::default() };
        let fit: Vec<usize> = (0..40).collect();
        let (with_query, model, _) = pca(&m, &fit, &cfg).unwrap();
        let ref_only = m.select_cells(&fit);
        let alone = model.transform(&ref_only).unwrap();
        for i in 0..40 {
            assert_eq!(with_query.row(i), alone.row(i));
        }
        let (refit, _, _) = pca(&ref_only, &fit, &cfg).unwrap();
        assert_eq!(refit.values(), alone.values());
    }

    #[test]
    fn randomized_matches_exact() {
        let m = random_log(8, 120, 60);
        let all: Vec<usize> = (0..120).collect();
        let exact = FeatureConfig { pca_dim: 4, pca_solver: PcaSolver::Exact, ..FeatureConfig::default() };
        let rand = FeatureConfig { pca_solver: PcaSolver::Randomized, pca_seed: 99, ..exact.clone() };
        let (fe, me, _) = pca(&m, &all, &exact).unwrap();
        let (fr, mr, _) = pca(&m, &all, &rand).unwrap();
        assert_eq!(mr.solver, PcaSolver::Randomized);
        for k in 0..4 {
            assert!((me.explained_variance[k] - mr.explained_variance[k]).abs() < 1e-9);
        }
        for (a, b) in fe.values().iter().zip(fr.values()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_oversized_dim_and_raw_input() {
        let m = random_log(1, 5, 8);
        let cfg = FeatureConfig { pca_dim: 6, ..FeatureConfig::default() };
        assert!(matches!(pca(&m, &[0, 1, 2, 3, 4], &cfg), Err(Error::Config(_))));
        let raw = ExpressionMatrix::empty(vec!["a".into()], vec!["g".into()]).unwrap();
        assert!(pca(&raw, &[0], &FeatureConfig { pca_dim: 1, ..FeatureConfig::default() }).is_err());
    }
}
