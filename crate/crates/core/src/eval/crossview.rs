//! Cross-species agreement of per-type centroids in the expression view
//! and the gene-set view.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ingest::{CellMetadata, ExpressionMatrix};
use crate::numeric::{mean, pearson, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAlignment {
    pub cell_type: String,
    pub species: Vec<String>,
    /// Mean Pearson r over species pairs.
    pub raw_r: f64,
    pub go_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSummary {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossViewReport {
    pub per_type: Vec<TypeAlignment>,
    pub raw: ViewSummary,
    pub go: ViewSummary,
    /// Relative change of the mean, in percent.
    pub gain_percent: Option<f64>,
    /// 1 − sd_go / sd_raw, in percent.
    pub variance_reduction_percent: Option<f64>,
    pub skipped_types: Vec<String>,
}

impl CrossViewReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("cell_type\tspecies\traw_r\tgo_r\n");
        for t in &self.per_type {
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{:.6}", t.cell_type, t.species.join(","), t.raw_r, t.go_r);
        }
        out
    }
}

fn centroid_dense(rows: &[usize], dim: usize, row: impl Fn(usize, &mut [f64])) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for &r in rows {
        row(r, &mut acc);
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

fn mean_pairwise_r(centroids: &[Vec<f64>]) -> Option<f64> {
    let mut rs = Vec::new();
    for a in 0..centroids.len() {
        for b in a + 1..centroids.len() {
            rs.push(pearson(&centroids[a], &centroids[b])?);
        }
    }
    Some(mean(&rs))
}

fn summary(values: &[f64]) -> ViewSummary {
    ViewSummary {
        mean: mean(values),
        sd: sample_sd(values),
    }
}

/// Per matched type: species centroids in each view, Pearson r between
/// them averaged over species pairs; then mean ± sd over types. Types seen
/// in one species only, or with a constant centroid, are skipped.
/// `types` restricts the analysis; `None` uses every labeled type.
pub fn cross_view_alignment(
    expression: &ExpressionMatrix,
    go: &FeatureMatrix,
    meta: &CellMetadata,
    types: Option<&[String]>,
) -> Result<CrossViewReport> {
    if expression.n_cells() != meta.len() || go.n_rows() != meta.len() {
        return Err(Error::Internal("view and metadata sizes differ".into()));
    }
    if go.dim() == 0 {
        return Err(Error::Config("cross-view alignment needs the gene-set view".into()));
    }
    let mut groups: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, r) in meta.iter().enumerate() {
        if let Some(t) = &r.cell_type {
            if types.is_none_or(|ts| ts.iter().any(|x| x == t)) {
                groups.entry(t).or_default().entry(&r.species).or_default().push(i);
            }
        }
    }
    let species_total: std::collections::BTreeSet<&str> = meta.iter().map(|r| r.species.as_str()).collect();
    if species_total.len() < 2 {
        return Err(Error::Data("cross-view alignment needs at least two species".into()));
    }
    let mut per_type = Vec::new();
    let mut skipped_types = Vec::new();
    for (t, by_species) in groups {
        if by_species.len() < 2 {
            log::warn!("cell type `{t}` occurs in one species only; skipped");
            skipped_types.push(t.to_string());
            continue;
        }
        let raw: Vec<Vec<f64>> = by_species
            .values()
            .map(|rows| {
                centroid_dense(rows, expression.n_genes(), |r, acc| {
                    let (idx, val) = expression.row(r);
                    for (&g, &v) in idx.iter().zip(val) {
                        acc[g as usize] += v;
                    }
                })
            })
            .collect();
        let gs: Vec<Vec<f64>> = by_species
            .values()
            .map(|rows| {
                centroid_dense(rows, go.dim(), |r, acc| {
                    acc.iter_mut().zip(go.row(r)).for_each(|(a, v)| *a += v);
                })
            })
            .collect();
        match (mean_pairwise_r(&raw), mean_pairwise_r(&gs)) {
            (Some(raw_r), Some(go_r)) => per_type.push(TypeAlignment {
                cell_type: t.to_string(),
                species: by_species.keys().map(|s| s.to_string()).collect(),
                raw_r,
                go_r,
            }),
            _ => {
                log::warn!("cell type `{t}` has a constant centroid; skipped");
                skipped_types.push(t.to_string());
            }
        }
    }
    let raw_rs: Vec<f64> = per_type.iter().map(|t| t.raw_r).collect();
    let go_rs: Vec<f64> = per_type.iter().map(|t| t.go_r).collect();
    let raw = summary(&raw_rs);
    let go_summary = summary(&go_rs);
    let gain_percent = (raw.mean != 0.0 && !per_type.is_empty()).then(|| (go_summary.mean / raw.mean - 1.0) * 100.0);
    let variance_reduction_percent = (raw.sd > 0.0).then(|| (1.0 - go_summary.sd / raw.sd) * 100.0);
    Ok(CrossViewReport {
        per_type,
        raw,
        go: go_summary,
        gain_percent,
        variance_reduction_percent,
        skipped_types,
    })
}
