//! Quality-control filters: sparse genes first, then cells by
//! mitochondrial fraction and total-count percentiles.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CellMetadata, ExpressionMatrix, NormalizationState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcConfig {
    pub min_cells_per_gene: usize,
    pub mito_fraction_max: f64,
    pub mito_gene_prefix: String,
    pub count_percentile_low: f64,
    pub count_percentile_high: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            min_cells_per_gene: 3,
            mito_fraction_max: 0.05,
            mito_gene_prefix: "MT-".into(),
            count_percentile_low: 5.0,
            count_percentile_high: 95.0,
        }
    }
}

impl QcConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.count_percentile_low, self.count_percentile_high);
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(Error::Config(format!("need 0 <= low < high <= 100, got {lo} and {hi}")));
        }
        if !(0.0..=1.0).contains(&self.mito_fraction_max) {
            return Err(Error::Config(format!(
                "mito_fraction_max must be in [0, 1], got {}",
                self.mito_fraction_max
            )));
        }
        Ok(())
    }
}

/// Counts removed per rule plus any notes about skipped rules.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub genes_in: usize,
    pub genes_removed_min_cells: usize,
    pub cells_in: usize,
    pub cells_removed_mito: usize,
    pub cells_removed_low_counts: usize,
    pub cells_removed_high_counts: usize,
    pub mito_filter_applied: bool,
    pub thresholds: Option<CellThresholds>,
    pub notes: Vec<String>,
}

/// Absolute cell-filter thresholds, fixed once from the input distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellThresholds {
    pub total_low: f64,
    pub total_high: f64,
    /// `None` when no gene matched the mitochondrial prefix.
    pub mito_fraction_max: Option<f64>,
}

fn require_raw(m: &ExpressionMatrix) -> Result<()> {
    if m.state() != NormalizationState::Raw {
        return Err(Error::Data("QC expects raw counts".into()));
    }
    Ok(())
}

/// Drops genes that are nonzero in fewer than `min_cells_per_gene` cells.
pub fn filter_genes(matrix: &ExpressionMatrix, cfg: &QcConfig, report: &mut QcReport) -> Result<ExpressionMatrix> {
    require_raw(matrix)?;
    let keep: Vec<usize> = matrix
        .cells_per_gene()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= cfg.min_cells_per_gene)
        .map(|(g, _)| g)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyFeatureSpace);
    }
    report.genes_in = matrix.n_genes();
    report.genes_removed_min_cells = matrix.n_genes() - keep.len();
    Ok(matrix.select_genes(&keep))
}

/// Nearest-rank percentile of already sorted values: the smallest value
/// such that at least `p` percent of the data is ≤ it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn is_mito(gene: &str, prefix: &str) -> bool {
    gene.len() >= prefix.len() && gene.as_bytes()[..prefix.len()].eq_ignore_ascii_case(prefix.as_bytes())
}

/// Per-cell `(total counts, mitochondrial fraction)`; `None` as mask when no
/// gene matches the prefix.
fn cell_stats(matrix: &ExpressionMatrix, prefix: &str) -> (Vec<f64>, Vec<f64>, bool) {
    let mito: Vec<bool> = matrix.gene_ids().iter().map(|g| is_mito(g, prefix)).collect();
    let any_mito = mito.iter().any(|&m| m);
    let mut totals = Vec::with_capacity(matrix.n_cells());
    let mut fractions = Vec::with_capacity(matrix.n_cells());
    for c in 0..matrix.n_cells() {
        let (idx, vals) = matrix.row(c);
        let total: f64 = vals.iter().sum();
        let mt: f64 = idx.iter().zip(vals).filter(|(&g, _)| mito[g as usize]).map(|(_, v)| v).sum();
        totals.push(total);
        fractions.push(if total > 0.0 { mt / total } else { 0.0 });
    }
    (totals, fractions, any_mito)
}

/// Computes the absolute thresholds `filter_cells` would apply to this input.
pub fn cell_thresholds(matrix: &ExpressionMatrix, cfg: &QcConfig) -> Result<CellThresholds> {
    if matrix.n_cells() == 0 {
        return Err(Error::NoCellsSurvive);
    }
    let (mut totals, _, any_mito) = cell_stats(matrix, &cfg.mito_gene_prefix);
    totals.sort_by(f64::total_cmp);
    Ok(CellThresholds {
        total_low: nearest_rank(&totals, cfg.count_percentile_low),
        total_high: nearest_rank(&totals, cfg.count_percentile_high),
        mito_fraction_max: any_mito.then_some(cfg.mito_fraction_max),
    })
}

/// Applies fixed thresholds. Idempotent for a given `thresholds`.
pub fn filter_cells_with(
    matrix: &ExpressionMatrix,
    meta: &CellMetadata,
    thresholds: &CellThresholds,
    prefix: &str,
    report: &mut QcReport,
) -> Result<(ExpressionMatrix, CellMetadata)> {
    require_raw(matrix)?;
    if meta.len() != matrix.n_cells() {
        return Err(Error::Data("metadata is not aligned to the matrix".into()));
    }
    let (totals, fractions, _) = cell_stats(matrix, prefix);
    let mut keep = Vec::new();
    for c in 0..matrix.n_cells() {
        if thresholds.mito_fraction_max.is_some_and(|cap| fractions[c] > cap) {
            report.cells_removed_mito += 1;
        } else if totals[c] < thresholds.total_low {
            report.cells_removed_low_counts += 1;
        } else if totals[c] > thresholds.total_high {
            report.cells_removed_high_counts += 1;
        } else {
            keep.push(c);
        }
    }
    if keep.is_empty() {
        return Err(Error::NoCellsSurvive);
    }
    Ok((matrix.select_cells(&keep), meta.select(&keep)))
}

/// Removes cells with a mitochondrial fraction above the cap or a total
/// count outside the inclusive percentile band of the input.
pub fn filter_cells(
    matrix: &ExpressionMatrix,
    meta: &CellMetadata,
    cfg: &QcConfig,
    report: &mut QcReport,
) -> Result<(ExpressionMatrix, CellMetadata)> {
    require_raw(matrix)?;
    cfg.validate()?;
    let thresholds = cell_thresholds(matrix, cfg)?;
    report.cells_in = matrix.n_cells();
    report.mito_filter_applied = thresholds.mito_fraction_max.is_some();
    if !report.mito_filter_applied {
        let note = format!(
            "no gene matches mitochondrial prefix `{}`; mitochondrial filter skipped",
            cfg.mito_gene_prefix
        );
        warn!("{note}");
        report.notes.push(note);
    }
    report.thresholds = Some(thresholds);
    filter_cells_with(matrix, meta, &thresholds, &cfg.mito_gene_prefix, report)
}

/// Gene filter followed by cell filter.
pub fn run(
    matrix: &ExpressionMatrix,
    meta: &CellMetadata,
    cfg: &QcConfig,
) -> Result<(ExpressionMatrix, CellMetadata, QcReport)> {
    cfg.validate()?;
    let mut report = QcReport::default();
    let genes = filter_genes(matrix, cfg, &mut report)?;
    let (m, meta) = filter_cells(&genes, meta, cfg, &mut report)?;
    Ok((m, meta, report))
}
