//! Observation and knowledge views against independent oracles.

use dogma_core::features::{go_enrichment, log_normalize, pca, FeatureConfig, PcaSolver};
use dogma_core::ingest::ExpressionMatrix;
use dogma_core::synth::{generate, SynthConfig};
use nalgebra::DMatrix;

fn corpus_matrix(seed: u64) -> (ExpressionMatrix, dogma_core::synth::Corpus) {
    let cfg = SynthConfig {
        n_genes: 120,
        program_size: 8,
        cells_per_type_per_domain: 6,
        n_background_terms: 10,
        seed,
        ..SynthConfig::default()
    };
    let corpus = generate(&cfg).unwrap();
    let (m, _) = log_normalize(corpus.matrix.clone(), 1e4).unwrap();
    (m, corpus)
}

/// Projections onto the top right singular vectors of the centered fit
/// rows, one column per component.
fn svd_projections(m: &ExpressionMatrix, fit: &[usize], d: usize) -> Vec<Vec<f64>> {
    let g = m.n_genes();
    let mut mean = vec![0.0; g];
    for &r in fit {
        for (acc, v) in mean.iter_mut().zip(m.dense_row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= fit.len() as f64);
    let x = DMatrix::from_fn(fit.len(), g, |i, j| m.get(fit[i], j) - mean[j]);
    let svd = x.svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order
        .iter()
        .take(d)
        .map(|&k| {
            (0..m.n_cells())
                .map(|c| (0..g).map(|j| (m.get(c, j) - mean[j]) * vt[(k, j)]).sum())
                .collect()
        })
        .collect()
}

fn assert_matches_up_to_sign(ours: &dogma_core::features::FeatureMatrix, oracle: &[Vec<f64>], tol: f64) {
    for (k, col) in oracle.iter().enumerate() {
        let got = ours.column(k);
        let sign = if got.iter().zip(col).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let worst = got.iter().zip(col).map(|(a, b)| (a - sign * b).abs()).fold(0.0, f64::max);
        assert!(worst < tol, "component {k}: max deviation {worst:e}");
    }
}

#[test]
fn exact_pca_matches_svd_oracle() {
    for seed in 0..5 {
        let (m, _) = corpus_matrix(seed);
        let fit: Vec<usize> = (0..m.n_cells()).collect();
        let cfg = FeatureConfig {
            pca_dim: 10,
            pca_solver: PcaSolver::Exact,
            ..FeatureConfig::default()
        };
        let (x, _, _) = pca(&m, &fit, &cfg).unwrap();
        assert_matches_up_to_sign(&x, &svd_projections(&m, &fit, 10), 1e-6);
    }
}

#[test]
fn randomized_pca_matches_svd_oracle() {
    let (m, _) = corpus_matrix(11);
    let fit: Vec<usize> = (0..m.n_cells()).collect();
    let cfg = FeatureConfig {
        pca_dim: 5,
        pca_solver: PcaSolver::Randomized,
        pca_seed: 3,
        ..FeatureConfig::default()
    };
    let (x, _, _) = pca(&m, &fit, &cfg).unwrap();
    assert_matches_up_to_sign(&x, &svd_projections(&m, &fit, 5), 1e-6);
}

#[test]
fn held_out_rows_use_the_fit_statistics() {
    let (m, _) = corpus_matrix(2);
    let fit: Vec<usize> = (0..m.n_cells()).filter(|c| c % 3 != 0).collect();
    let cfg = FeatureConfig {
        pca_dim: 8,
        pca_solver: PcaSolver::Exact,
        ..FeatureConfig::default()
    };
    let (x, _, _) = pca(&m, &fit, &cfg).unwrap();
    assert_matches_up_to_sign(&x, &svd_projections(&m, &fit, 8), 1e-6);
}

#[test]
fn go_columns_are_standardized_on_fit_rows() {
    for seed in 0..5 {
        let (m, corpus) = corpus_matrix(seed);
        let fit: Vec<usize> = (0..m.n_cells()).collect();
        let (z, model, _) =
            go_enrichment(&m, &fit, &corpus.annotations, &corpus.gene_ontology, &FeatureConfig::default()).unwrap();
        assert!(z.dim() > 0);
        let n = z.n_rows() as f64;
        for t in 0..z.dim() {
            let col = z.column(t);
            let mu = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(mu.abs() < 1e-9, "term {} mean {mu:e}", model.terms[t]);
            if model.sd[t] > 0.0 {
                assert!((sd - 1.0).abs() < 1e-6, "term {} sd {sd}", model.terms[t]);
            }
        }
    }
}

#[test]
fn go_score_is_member_mean_recomputed_by_hand() {
    let (m, corpus) = corpus_matrix(4);
    let fit: Vec<usize> = (0..m.n_cells()).collect();
    let (z, model, _) =
        go_enrichment(&m, &fit, &corpus.annotations, &corpus.gene_ontology, &FeatureConfig::default()).unwrap();
    let gene_index = |g: &str| m.gene_ids().iter().position(|x| x == g).unwrap();
    for program in &corpus.truth.programs {
        let t = model.terms.iter().position(|x| *x == program.term).unwrap();
        let members: Vec<usize> = program.genes.iter().map(|g| gene_index(g)).collect();
        let raw: Vec<f64> = (0..m.n_cells())
            .map(|c| members.iter().map(|&g| m.get(c, g)).sum::<f64>() / members.len() as f64)
            .collect();
        for (c, r) in raw.iter().enumerate() {
            let expected = (r - model.mean[t]) / model.sd[t];
            assert!((z.get(c, t) - expected).abs() < 1e-9);
        }
    }
}
