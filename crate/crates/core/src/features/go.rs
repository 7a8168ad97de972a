//! Knowledge view: per-cell mean expression of each GO term's annotated
//! genes, the highest-variance terms kept, each column z-scored with
//! statistics frozen from the fit rows.

use log::warn;

use super::{FeatureConfig, FeatureMatrix, View};
use crate::error::{Error, Result};
use crate::ingest::{ExpressionMatrix, GeneAnnotationMap, NormalizationState, OntologyDag};
use crate::numeric::{mean, sample_sd, sample_variance};

#[derive(Debug, Clone, PartialEq)]
pub struct GoModel {
    pub gene_ids: Vec<String>,
    /// Selected term ids, highest fit-row variance first.
    pub terms: Vec<String>,
    /// Member gene indices (into `gene_ids`) per selected term.
    pub members: Vec<Vec<usize>>,
    pub raw_variance: Vec<f64>,
    pub mean: Vec<f64>,
    /// Zero marks a constant column, which maps to all zeros.
    pub sd: Vec<f64>,
}

/// Raw enrichment scores: `scores[cell * n_terms + t]` is the mean of the
/// member genes' values in that cell.
fn raw_scores(matrix: &ExpressionMatrix, members: &[Vec<usize>]) -> Vec<f64> {
    let n_terms = members.len();
    let mut gene_terms: Vec<Vec<usize>> = vec![Vec::new(); matrix.n_genes()];
    for (t, genes) in members.iter().enumerate() {
        for &g in genes {
            gene_terms[g].push(t);
        }
    }
    let mut scores = vec![0.0; matrix.n_cells() * n_terms];
    for c in 0..matrix.n_cells() {
        let row = &mut scores[c * n_terms..(c + 1) * n_terms];
        let (idx, vals) = matrix.row(c);
        for (&g, &v) in idx.iter().zip(vals) {
            for &t in &gene_terms[g as usize] {
                row[t] += v;
            }
        }
        for (s, genes) in row.iter_mut().zip(members) {
            *s /= genes.len() as f64;
        }
    }
    scores
}

impl GoModel {
    pub fn transform(&self, matrix: &ExpressionMatrix) -> Result<FeatureMatrix> {
        if matrix.gene_ids() != self.gene_ids.as_slice() {
            return Err(Error::Data("matrix genes differ from the GO fit".into()));
        }
        let k = self.terms.len();
        let mut values = raw_scores(matrix, &self.members);
        for row in values.chunks_mut(k.max(1)) {
            for (t, v) in row.iter_mut().enumerate().take(k) {
                *v = if self.sd[t] > 0.0 { (*v - self.mean[t]) / self.sd[t] } else { 0.0 };
            }
        }
        FeatureMatrix::new(matrix.n_cells(), k, values, View::Knowledge, self.terms.clone())
    }
}

/// Member genes per GO term (by DAG index), restricted to genes present in
/// the matrix.
fn term_members(
    matrix: &ExpressionMatrix,
    ann: &GeneAnnotationMap,
    go: &OntologyDag,
    propagate: bool,
) -> Result<Vec<Vec<usize>>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); go.len()];
    for (g, gene) in matrix.gene_ids().iter().enumerate() {
        let Some(terms) = ann.terms_of(gene) else { continue };
        let mut hit: Vec<usize> = Vec::new();
        for t in terms {
            let ti = go.index_of(t).ok_or_else(|| Error::UnknownTerm(t.clone()))?;
            hit.push(ti);
            if propagate {
                hit.extend(go.ancestors(ti));
            }
        }
        hit.sort_unstable();
        hit.dedup();
        for t in hit {
            members[t].push(g);
        }
    }
    Ok(members)
}

/// Fits the knowledge view on `fit_rows` and applies it to every row.
pub fn go_enrichment(
    matrix: &ExpressionMatrix,
    fit_rows: &[usize],
    ann: &GeneAnnotationMap,
    go: &OntologyDag,
    cfg: &FeatureConfig,
) -> Result<(FeatureMatrix, GoModel, Vec<String>)> {
    if matrix.state() != NormalizationState::LogNormalized {
        return Err(Error::Data("GO enrichment expects a log-normalized matrix".into()));
    }
    if ann.is_empty() {
        return Err(Error::Data("gene annotation map is empty".into()));
    }
    if fit_rows.is_empty() {
        return Err(Error::Data("GO enrichment needs at least one row to fit".into()));
    }
    let members = term_members(matrix, ann, go, cfg.propagate_go_annotations)?;
    let eligible: Vec<usize> = (0..go.len()).filter(|&t| !members[t].is_empty()).collect();
    let eligible_members: Vec<Vec<usize>> = eligible.iter().map(|&t| members[t].clone()).collect();
    let fit_matrix = matrix.select_cells(fit_rows);
    let scores = raw_scores(&fit_matrix, &eligible_members);
    let k_all = eligible.len();
    let column = |t: usize| -> Vec<f64> { (0..fit_rows.len()).map(|r| scores[r * k_all + t]).collect() };

    // (constant?, variance, position) so constant columns sort last.
    let mut ranked: Vec<(bool, f64, usize)> = (0..k_all)
        .map(|t| {
            let col = column(t);
            let constant = col.iter().all(|&v| v == col[0]);
            (constant, if constant { 0.0 } else { sample_variance(&col) }, t)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));

    let mut notes = Vec::new();
    if k_all < cfg.go_dim {
        let note = format!("only {k_all} GO terms have annotated genes present; keeping all (go_dim {})", cfg.go_dim);
        warn!("{note}");
        notes.push(note);
    }
    let chosen: Vec<(bool, f64, usize)> = ranked.into_iter().take(cfg.go_dim).collect();
    let mut model = GoModel {
        gene_ids: matrix.gene_ids().to_vec(),
        terms: Vec::new(),
        members: Vec::new(),
        raw_variance: Vec::new(),
        mean: Vec::new(),
        sd: Vec::new(),
    };
    for (constant, var, t) in chosen {
        let col = column(t);
        model.terms.push(go.term(eligible[t]).id.clone());
        model.members.push(eligible_members[t].clone());
        model.raw_variance.push(var);
        model.mean.push(mean(&col));
        model.sd.push(if constant { 0.0 } else { sample_sd(&col) });
    }
    let features = model.transform(matrix)?;
    Ok((features, model, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_annotations_str, parse_obo_str};

    fn setup() -> (ExpressionMatrix, GeneAnnotationMap, OntologyDag) {
        let go = parse_obo_str(
            "[Term]\nid: GO:root\n\n[Term]\nid: GO:a\nis_a: GO:root\n\n[Term]\nid: GO:b\nis_a: GO:root\n\n\
             [Term]\nid: GO:const\nis_a: GO:root\n\n[Term]\nid: GO:absent\nis_a: GO:root\n",
            "go",
        )
        .unwrap();
        let ann = parse_annotations_str(
            "g0\tGO:a\ng1\tGO:b\ng2\tGO:b\ng3\tGO:const\ng9\tGO:absent\n",
            &go,
            "ann",
        )
        .unwrap();
        let vals = [
            [1.0, 0.0, 2.0, 3.0],
            [2.0, 1.0, 0.0, 3.0],
            [4.0, 3.0, 1.0, 3.0],
            [0.0, 2.0, 2.0, 3.0],
            [3.0, 0.5, 0.5, 3.0],
        ];
        let trip = vals
            .iter()
            .enumerate()
            .flat_map(|(c, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(g, &v)| (c, g, v)));
        let m = ExpressionMatrix::from_triplets(
            (0..5).map(|i| format!("c{i}")).collect(),
            (0..4).map(|i| format!("g{i}")).collect(),
            trip,
            NormalizationState::LogNormalized,
        )
        .unwrap();
        (m, ann, go)
    }

    #[test]
    fn singleton_term_is_its_gene_zscored() {
        let (m, ann, go) = setup();
        let cfg = FeatureConfig { go_dim: 3, ..FeatureConfig::default() };
        let all: Vec<usize> = (0..5).collect();
        let (z, model, notes) = go_enrichment(&m, &all, &ann, &go, &cfg).unwrap();
        assert!(notes.is_empty());
        assert_eq!(model.terms.len(), 3);
        assert_eq!(model.terms.last().unwrap(), "GO:const", "constant column ranks last");
        let a = model.terms.iter().position(|t| t == "GO:a").unwrap();
        let gene0: Vec<f64> = (0..5).map(|c| m.get(c, 0)).collect();
        let (mu, sd) = (mean(&gene0), sample_sd(&gene0));
        for c in 0..5 {
            assert!((z.get(c, a) - (gene0[c] - mu) / sd).abs() < 1e-12);
        }
        let col = z.column(a);
        assert!(mean(&col).abs() < 1e-9);
        assert!((sample_sd(&col) - 1.0).abs() < 1e-6);
        assert!(z.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_column_excluded_when_not_short() {
        let (m, ann, go) = setup();
        let cfg = FeatureConfig { go_dim: 2, ..FeatureConfig::default() };
        let all: Vec<usize> = (0..5).collect();
        let (_, model, _) = go_enrichment(&m, &all, &ann, &go, &cfg).unwrap();
        assert!(!model.terms.contains(&"GO:const".to_string()));
    }

    #[test]
    fn shortage_keeps_everything_with_note() {
        let (m, ann, go) = setup();
        let all: Vec<usize> = (0..5).collect();
        let (z, _, notes) = go_enrichment(&m, &all, &ann, &go, &FeatureConfig::default()).unwrap();
        assert_eq!(z.dim(), 3, "GO:absent and GO:root have no present genes");
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn propagation_makes_ancestors_eligible() {
        let (m, ann, go) = setup();
        let cfg = FeatureConfig { propagate_go_annotations: true, ..FeatureConfig::default() };
        let all: Vec<usize> = (0..5).collect();
        let (_, model, _) = go_enrichment(&m, &all, &ann, &go, &cfg).unwrap();
        let root = model.terms.iter().position(|t| t == "GO:root").unwrap();
        assert_eq!(model.members[root], vec![0, 1, 2, 3]);
    }

    #[test]
    fn statistics_are_frozen_from_fit_rows() {
        let (m, ann, go) = setup();
        let cfg = FeatureConfig { go_dim: 2, ..FeatureConfig::default() };
        let (z_all, model, _) = go_enrichment(&m, &[0, 1, 2], &ann, &go, &cfg).unwrap();
        let fit_only = model.transform(&m.select_cells(&[0, 1, 2])).unwrap();
        for i in 0..3 {
            assert_eq!(z_all.row(i), fit_only.row(i));
        }
    }
}
