//! Stratified downsampling of Reference cells that never empties a stratum.
//!
//! Each stratum gets a largest-remainder share of `target_total`, raised to
//! `min_per_stratum` and capped at the stratum size. Query cells carry no
//! usable label and always pass through.

use std::collections::BTreeMap;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CellMetadata, ExpressionMatrix, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyKey {
    CellType,
    CellTypeDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownsampleConfig {
    /// `None` disables downsampling.
    pub target_total: Option<usize>,
    pub stratify_key: StratifyKey,
    pub min_per_stratum: usize,
    /// Set by the pipeline from the global seed.
    #[serde(skip_deserializing)]
    pub seed: u64,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        DownsampleConfig {
            target_total: None,
            stratify_key: StratifyKey::CellType,
            min_per_stratum: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DownsampleReport {
    pub reference_in: usize,
    pub reference_kept: usize,
    pub query_passed_through: usize,
    /// `(stratum label, size, kept)` in stratum order.
    pub strata: Vec<(String, usize, usize)>,
    pub notes: Vec<String>,
}

/// Largest-remainder apportionment of `target` seats over `sizes`.
/// Remainder ties go to the earlier stratum.
pub fn largest_remainder(target: usize, sizes: &[usize]) -> Vec<usize> {
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut seats = Vec::with_capacity(sizes.len());
    let mut remainders = Vec::with_capacity(sizes.len());
    for (i, &s) in sizes.iter().enumerate() {
        let q = target as u128 * s as u128;
        seats.push((q / total) as usize);
        remainders.push((q % total, i));
    }
    let left = target.saturating_sub(seats.iter().sum());
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(left) {
        seats[i] += 1;
    }
    seats
}

fn stratum_label(meta: &CellMetadata, cell: usize, key: StratifyKey) -> String {
    let r = meta.get(cell);
    let t = r.cell_type.as_deref().unwrap_or("");
    match key {
        StratifyKey::CellType => t.to_string(),
        StratifyKey::CellTypeDomain => format!("{t}|{}", r.domain),
    }
}

pub fn stratified_downsample(
    matrix: &ExpressionMatrix,
    meta: &CellMetadata,
    cfg: &DownsampleConfig,
) -> Result<(ExpressionMatrix, CellMetadata, DownsampleReport)> {
    if meta.len() != matrix.n_cells() {
        return Err(Error::Data("metadata is not aligned to the matrix".into()));
    }
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut query = Vec::new();
    for c in 0..meta.len() {
        match meta.get(c).split {
            Split::Reference => strata.entry(stratum_label(meta, c, cfg.stratify_key)).or_default().push(c),
            Split::Query => query.push(c),
        }
    }
    let n_ref: usize = strata.values().map(Vec::len).sum();
    let mut report = DownsampleReport {
        reference_in: n_ref,
        query_passed_through: query.len(),
        ..DownsampleReport::default()
    };
    let identity = |mut report: DownsampleReport, note: Option<String>| {
        if let Some(n) = note {
            warn!("{n}");
            report.notes.push(n);
        }
        report.reference_kept = n_ref;
        report.strata = strata.iter().map(|(k, v)| (k.clone(), v.len(), v.len())).collect();
        Ok((matrix.clone(), meta.clone(), report))
    };
    let Some(target) = cfg.target_total else {
        return identity(report, None);
    };
    if target >= n_ref {
        let note = (target > n_ref).then(|| format!("target_total {target} exceeds {n_ref} reference cells; nothing removed"));
        return identity(report, note);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let smallest = sizes.iter().copied().min().unwrap_or(0);
    if target < sizes.len() * cfg.min_per_stratum.min(smallest) {
        return Err(Error::Config(format!(
            "target_total {target} cannot hold {} strata at the per-stratum floor",
            sizes.len()
        )));
    }
    let shares = largest_remainder(target, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut keep: Vec<usize> = query.clone();
    for ((label, cells), share) in strata.iter().zip(&shares) {
        let n_keep = cells.len().min(cfg.min_per_stratum.max(*share));
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, cells.len(), n_keep)
            .into_iter()
            .map(|i| cells[i])
            .collect();
        picked.sort_unstable();
        report.strata.push((label.clone(), cells.len(), n_keep));
        report.reference_kept += n_keep;
        keep.extend(picked);
    }
    keep.sort_unstable();
    Ok((matrix.select_cells(&keep), meta.select(&keep), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CellRecord, NormalizationState};
    use std::collections::HashMap;

    fn corpus(sizes: &[usize], n_query: usize) -> (ExpressionMatrix, CellMetadata) {
        let mut records = Vec::new();
        for (t, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                records.push(CellRecord {
                    cell_id: format!("t{t}_{i}"),
                    species: "s".into(),
                    cell_type: Some(format!("T{t}")),
                    domain: format!("d{}", i % 2),
                    split: Split::Reference,
                });
            }
        }
        for i in 0..n_query {
            records.push(CellRecord {
                cell_id: format!("q{i}"),
                species: "s".into(),
                cell_type: None,
                domain: "d0".into(),
                split: Split::Query,
            });
        }
        let ids: Vec<String> = records.iter().map(|r| r.cell_id.clone()).collect();
        let m = ExpressionMatrix::from_triplets(ids, vec!["g".into()], [], NormalizationState::Raw).unwrap();
        (m, CellMetadata::new(records))
    }

    fn kept_per_type(meta: &CellMetadata) -> HashMap<String, usize> {
        let mut h = HashMap::new();
        for r in meta.iter().filter(|r| r.split == Split::Reference) {
            *h.entry(r.cell_type.clone().unwrap()).or_insert(0) += 1;
        }
        h
    }

    #[test]
    fn rare_stratum_kept_whole() {
        let (m, meta) = corpus(&[900, 90, 10], 0);
        let cfg = DownsampleConfig { target_total: Some(100), ..DownsampleConfig::default() };
        let (_, out, _) = stratified_downsample(&m, &meta, &cfg).unwrap();
        let k = kept_per_type(&out);
        assert!(k.values().all(|&n| n >= 10));
        assert_eq!(k["T2"], 10);
    }

    #[test]
    fn large_target_is_identity() {
        let (m, meta) = corpus(&[5, 7], 3);
        for target in [12, 50] {
            let cfg = DownsampleConfig { target_total: Some(target), ..DownsampleConfig::default() };
            let (mo, out, _) = stratified_downsample(&m, &meta, &cfg).unwrap();
            assert_eq!(out, meta);
            assert_eq!(mo, m);
        }
    }

    /// Independent largest-remainder oracle on floating-point quotas.
    fn oracle(target: usize, sizes: &[usize]) -> Vec<usize> {
        let total: usize = sizes.iter().sum();
        let quotas: Vec<f64> = sizes.iter().map(|&s| target as f64 * s as f64 / total as f64).collect();
        let mut seats: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let left = target - seats.iter().sum::<usize>();
        for &i in order.iter().take(left) {
            seats[i] += 1;
        }
        seats
    }

    #[test]
    fn apportionment_matches_oracle() {
        assert_eq!(largest_remainder(500, &[600, 300, 100]), vec![300, 150, 50]);
        assert_eq!(oracle(500, &[600, 300, 100]), vec![300, 150, 50]);
        for (target, sizes) in [(10, vec![3usize, 3, 3]), (7, vec![5, 11, 2, 9]), (100, vec![333, 334, 1])] {
            assert_eq!(largest_remainder(target, &sizes), oracle(target, &sizes));
            assert_eq!(largest_remainder(target, &sizes).iter().sum::<usize>(), target);
        }
        let (m, meta) = corpus(&[600, 300, 100], 0);
        let cfg = DownsampleConfig { target_total: Some(500), ..DownsampleConfig::default() };
        let (_, out, _) = stratified_downsample(&m, &meta, &cfg).unwrap();
        let k = kept_per_type(&out);
        assert_eq!((k["T0"], k["T1"], k["T2"]), (300, 150, 50));
    }

    #[test]
    fn seed_determinism_and_query_passthrough() {
        let (m, meta) = corpus(&[200, 50, 12], 7);
        let cfg = DownsampleConfig { target_total: Some(60), seed: 42, ..DownsampleConfig::default() };
        let (_, a, ra) = stratified_downsample(&m, &meta, &cfg).unwrap();
        let (_, b, _) = stratified_downsample(&m, &meta, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|r| r.split == Split::Query).count(), 7);
        assert_eq!(ra.query_passed_through, 7);
        let other = DownsampleConfig { seed: 43, ..cfg };
        let (_, c, _) = stratified_downsample(&m, &meta, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn joint_strata_never_emptied() {
        let (m, meta) = corpus(&[300, 40, 4], 0);
        let cfg = DownsampleConfig {
            target_total: Some(50),
            stratify_key: StratifyKey::CellTypeDomain,
            min_per_stratum: 3,
            seed: 1,
        };
        let (_, out, report) = stratified_downsample(&m, &meta, &cfg).unwrap();
        assert_eq!(report.strata.len(), 6);
        for (label, size, kept) in &report.strata {
            assert!(*kept >= 1 && kept <= size, "{label}");
        }
        assert_eq!(out.len(), report.reference_kept);
    }

    #[test]
    fn infeasible_target_is_rejected() {
        let (m, meta) = corpus(&[50, 50, 50], 0);
        let cfg = DownsampleConfig { target_total: Some(20), ..DownsampleConfig::default() };
        assert!(matches!(stratified_downsample(&m, &meta, &cfg), Err(Error::Config(_))));
    }
}
