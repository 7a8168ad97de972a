//! Sparse cells × genes expression matrix and its Matrix Market encoding.
//!
//! Rows are cells and columns are genes. The `.mtx` body carries only the
//! coordinates; identifiers live in two sidecar files with one id per line
//! in matrix order.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, split_lines, write_text};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizationState {
    Raw,
    LogNormalized,
}

/// Compressed sparse row storage. Within a row, gene indices are strictly
/// increasing and every stored value is finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    cell_ids: Vec<String>,
    gene_ids: Vec<String>,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    state: NormalizationState,
}

impl ExpressionMatrix {
    /// Builds a matrix from `(cell, gene, value)` triplets in any order.
    pub fn from_triplets(
        cell_ids: Vec<String>,
        gene_ids: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        state: NormalizationState,
    ) -> Result<Self> {
        check_unique("cell", &cell_ids)?;
        check_unique("gene", &gene_ids)?;
        let n_cells = cell_ids.len();
        let n_genes = gene_ids.len();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (c, g, v) in triplets {
            if c >= n_cells || g >= n_genes {
                return Err(Error::Data(format!(
                    "entry ({c}, {g}) outside {n_cells}x{n_genes} matrix"
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Data(format!("entry ({c}, {g}) has invalid value {v}")));
            }
            entries.push((c, g, v));
        }
        entries.sort_by_key(|&(c, g, _)| (c, g));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Data(format!("duplicate entry ({}, {})", w[0].0, w[0].1)));
        }
        Ok(Self::from_sorted(cell_ids, gene_ids, &entries, state))
    }

    fn from_sorted(
        cell_ids: Vec<String>,
        gene_ids: Vec<String>,
        entries: &[(usize, usize, f64)],
        state: NormalizationState,
    ) -> Self {
        let mut indptr = vec![0usize; cell_ids.len() + 1];
        for &(c, _, _) in entries {
            indptr[c + 1] += 1;
        }
        for i in 0..cell_ids.len() {
            indptr[i + 1] += indptr[i];
        }
        ExpressionMatrix {
            indices: entries.iter().map(|&(_, g, _)| g as u32).collect(),
            values: entries.iter().map(|&(_, _, v)| v).collect(),
            cell_ids,
            gene_ids,
            indptr,
            state,
        }
    }

    /// An all-zero matrix.
    pub fn empty(cell_ids: Vec<String>, gene_ids: Vec<String>) -> Result<Self> {
        Self::from_triplets(cell_ids, gene_ids, [], NormalizationState::Raw)
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn state(&self) -> NormalizationState {
        self.state
    }

    /// Sparse row of one cell: sorted gene indices and their values.
    pub fn row(&self, cell: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[cell], self.indptr[cell + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, cell: usize, gene: usize) -> f64 {
        let (idx, vals) = self.row(cell);
        match idx.binary_search(&(gene as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Dense copy of one row.
    pub fn dense_row(&self, cell: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_genes()];
        let (idx, vals) = self.row(cell);
        for (&g, &v) in idx.iter().zip(vals) {
            out[g as usize] = v;
        }
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_cells()).flat_map(move |c| {
            let (idx, vals) = self.row(c);
            idx.iter().zip(vals).map(move |(&g, &v)| (c, g as usize, v))
        })
    }

    pub fn row_sum(&self, cell: usize) -> f64 {
        self.row(cell).1.iter().sum()
    }

    /// Number of cells with a nonzero value, per gene.
    pub fn cells_per_gene(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_genes()];
        for (&g, &v) in self.indices.iter().zip(&self.values) {
            if v != 0.0 {
                counts[g as usize] += 1;
            }
        }
        counts
    }

    /// Keeps the listed cells, in the given order.
    pub fn select_cells(&self, cells: &[usize]) -> Self {
        let mut indptr = Vec::with_capacity(cells.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &c in cells {
            let (idx, vals) = self.row(c);
            indices.extend_from_slice(idx);
            values.extend_from_slice(vals);
            indptr.push(indices.len());
        }
        ExpressionMatrix {
            cell_ids: cells.iter().map(|&c| self.cell_ids[c].clone()).collect(),
            gene_ids: self.gene_ids.clone(),
            indptr,
            indices,
            values,
            state: self.state,
        }
    }

    /// Keeps the listed genes. `genes` must be strictly increasing so that
    /// relative gene order is preserved.
    pub fn select_genes(&self, genes: &[usize]) -> Self {
        debug_assert!(genes.windows(2).all(|w| w[0] < w[1]));
        let mut remap = vec![u32::MAX; self.n_genes()];
        for (new, &old) in genes.iter().enumerate() {
            remap[old] = new as u32;
        }
        let mut indptr = Vec::with_capacity(self.n_cells() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for c in 0..self.n_cells() {
            let (idx, vals) = self.row(c);
            for (&g, &v) in idx.iter().zip(vals) {
                let m = remap[g as usize];
                if m != u32::MAX {
                    indices.push(m);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        ExpressionMatrix {
            cell_ids: self.cell_ids.clone(),
            gene_ids: genes.iter().map(|&g| self.gene_ids[g].clone()).collect(),
            indptr,
            indices,
            values,
            state: self.state,
        }
    }

    /// Applies `f(cell, value)` to every stored value and moves the matrix
    /// into `LogNormalized` state. Refuses to run on an already normalized
    /// matrix.
    pub(crate) fn map_to_log_normalized(mut self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        if self.state != NormalizationState::Raw {
            return Err(Error::Data("matrix is already log-normalized".into()));
        }
        for c in 0..self.n_cells() {
            let (a, b) = (self.indptr[c], self.indptr[c + 1]);
            for v in &mut self.values[a..b] {
                *v = f(c, *v);
            }
        }
        self.state = NormalizationState::LogNormalized;
        Ok(self)
    }
}

fn check_unique(what: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.is_empty() {
            return Err(Error::Data(format!("empty {what} id")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(())
}

const NORMALIZATION_TAG: &str = "% normalization:";

/// Parses the `.mtx` text against already-loaded id lists.
pub fn parse_matrix_market_str(
    text: &str,
    cell_ids: Vec<String>,
    gene_ids: Vec<String>,
    source_name: &str,
) -> Result<ExpressionMatrix> {
    let err = |line: usize, msg: String| Error::parse(source_name, line, msg);
    let mut lines = split_lines(text).enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(err(1, format!("malformed header `{header}`")));
    }
    if fields[2] != "coordinate" {
        return Err(err(1, format!("unsupported format `{}`", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(err(1, format!("unsupported field `{}`", fields[3])));
    }
    if fields[4] != "general" {
        return Err(err(1, format!("unsupported symmetry `{}`", fields[4])));
    }

    let mut state = NormalizationState::Raw;
    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, f64, usize)> = Vec::new();
    for (ln, line) in lines {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix(NORMALIZATION_TAG) {
            state = match rest.trim() {
                "raw" => NormalizationState::Raw,
                "log-normalized" => NormalizationState::LogNormalized,
                other => return Err(err(ln, format!("unknown normalization `{other}`"))),
            };
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(err(ln, format!("malformed size line `{trimmed}`")));
                }
                let nums: Vec<usize> = parts
                    .iter()
                    .map(|p| p.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(ln, format!("malformed size line: {e}")))?;
                if nums[0] != cell_ids.len() || nums[1] != gene_ids.len() {
                    return Err(err(
                        ln,
                        format!(
                            "size {}x{} does not match {} cell ids and {} gene ids",
                            nums[0],
                            nums[1],
                            cell_ids.len(),
                            gene_ids.len()
                        ),
                    ));
                }
                if nums[2] > nums[0].saturating_mul(nums[1]) {
                    return Err(err(ln, format!("nnz {} exceeds matrix size", nums[2])));
                }
                size = Some((nums[0], nums[1], nums[2]));
                entries.reserve(nums[2].min(1 << 24));
            }
            Some((rows, cols, nnz)) => {
                if parts.len() != 3 {
                    return Err(err(ln, format!("malformed entry `{trimmed}`")));
                }
                let r: usize = parts[0].parse().map_err(|_| err(ln, format!("bad row index `{}`", parts[0])))?;
                let c: usize = parts[1].parse().map_err(|_| err(ln, format!("bad column index `{}`", parts[1])))?;
                let v: f64 = parts[2].parse().map_err(|_| err(ln, format!("bad value `{}`", parts[2])))?;
                if r == 0 || r > rows || c == 0 || c > cols {
                    return Err(err(ln, format!("index ({r}, {c}) out of bounds {rows}x{cols}")));
                }
                if !v.is_finite() {
                    return Err(err(ln, format!("non-finite value `{}`", parts[2])));
                }
                if v < 0.0 {
                    return Err(err(ln, format!("negative value {v}")));
                }
                if entries.len() == nnz {
                    return Err(err(ln, format!("more entries than declared nnz {nnz}")));
                }
                entries.push((r - 1, c - 1, v, ln));
            }
        }
    }
    let (_, _, nnz) = size.ok_or_else(|| err(0, "missing size line".into()))?;
    if entries.len() != nnz {
        return Err(err(0, format!("declared {nnz} entries, found {}", entries.len())));
    }
    entries.sort_by_key(|&(r, c, _, ln)| (r, c, ln));
    if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(err(
            w[1].3,
            format!("duplicate coordinate ({}, {}) first seen on line {}", w[1].0 + 1, w[1].1 + 1, w[0].3),
        ));
    }
    check_unique("cell", &cell_ids).map_err(|e| err(0, e.to_string()))?;
    check_unique("gene", &gene_ids).map_err(|e| err(0, e.to_string()))?;
    let sorted: Vec<(usize, usize, f64)> = entries.into_iter().map(|(r, c, v, _)| (r, c, v)).collect();
    Ok(ExpressionMatrix::from_sorted(cell_ids, gene_ids, &sorted, state))
}

/// Parses an id sidecar: one non-empty id per line.
pub fn parse_id_list(text: &str, source_name: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    let mut lines: Vec<&str> = split_lines(text).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    for (i, line) in lines.into_iter().enumerate() {
        let id = line.trim();
        if id.is_empty() {
            return Err(Error::parse(source_name, i + 1, "empty id"));
        }
        ids.push(id.to_string());
    }
    Ok(ids)
}

pub fn parse_matrix_market(mtx: &Path, cell_ids: &Path, gene_ids: &Path) -> Result<ExpressionMatrix> {
    let cells = parse_id_list(&read_text(cell_ids)?, &cell_ids.display().to_string())?;
    let genes = parse_id_list(&read_text(gene_ids)?, &gene_ids.display().to_string())?;
    parse_matrix_market_str(&read_text(mtx)?, cells, genes, &mtx.display().to_string())
}

pub fn matrix_market_string(m: &ExpressionMatrix) -> String {
    let mut out = String::with_capacity(32 + m.nnz() * 16);
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let tag = match m.state {
        NormalizationState::Raw => "raw",
        NormalizationState::LogNormalized => "log-normalized",
    };
    let _ = writeln!(out, "{NORMALIZATION_TAG} {tag}");
    let _ = writeln!(out, "{} {} {}", m.n_cells(), m.n_genes(), m.nnz());
    for (c, g, v) in m.triplets() {
        let _ = writeln!(out, "{} {} {}", c + 1, g + 1, v);
    }
    out
}

pub fn id_list_string(ids: &[String]) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(id);
        out.push('\n');
    }
    out
}

pub fn write_matrix_market(m: &ExpressionMatrix, mtx: &Path, cell_ids: &Path, gene_ids: &Path) -> Result<()> {
    write_text(mtx, &matrix_market_string(m))?;
    write_text(cell_ids, &id_list_string(&m.cell_ids))?;
    write_text(gene_ids, &id_list_string(&m.gene_ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn parses_small_file() {
        let text = "%%MatrixMarket matrix coordinate integer general\n% comment\n3 2 3\n1 1 5\n2 2 3\n3 1 1\n";
        let m = parse_matrix_market_str(text, ids("c", 3), ids("g", 2), "t").unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 0), 5.0);
        assert_eq!(m.get(1, 1), 3.0);
        assert_eq!(m.get(2, 0), 1.0);
        assert_eq!(m.state(), NormalizationState::Raw);
    }

    #[test]
    fn empty_body_is_all_zero() {
        let text = "%%MatrixMarket matrix coordinate real general\n3 2 0\n";
        let m = parse_matrix_market_str(text, ids("c", 3), ids("g", 2), "t").unwrap();
        assert_eq!((m.n_cells(), m.n_genes(), m.nnz()), (3, 2, 0));
    }

    #[test]
    fn crlf_is_accepted() {
        let text = "%%MatrixMarket matrix coordinate real general\r\n2 2 1\r\n2 1 0.5\r\n";
        let m = parse_matrix_market_str(text, ids("c", 2), ids("g", 2), "t").unwrap();
        assert_eq!(m.get(1, 0), 0.5);
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        let base = "%%MatrixMarket matrix coordinate real general\n2 2 2\n";
        let neg = format!("{base}1 1 1\n2 2 -1\n");
        assert_eq!(line_of(parse_matrix_market_str(&neg, ids("c", 2), ids("g", 2), "t").unwrap_err()), 4);
        let oob = format!("{base}1 3 1\n2 2 1\n");
        assert_eq!(line_of(parse_matrix_market_str(&oob, ids("c", 2), ids("g", 2), "t").unwrap_err()), 3);
        let dup = format!("{base}1 1 1\n1 1 2\n");
        assert_eq!(line_of(parse_matrix_market_str(&dup, ids("c", 2), ids("g", 2), "t").unwrap_err()), 4);
        let bad_header = "%%MatrixMarket matrix array real general\n2 2 0\n";
        assert_eq!(line_of(parse_matrix_market_str(bad_header, ids("c", 2), ids("g", 2), "t").unwrap_err()), 1);
    }

    #[test]
    fn entry_count_must_match_header() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n";
        assert!(parse_matrix_market_str(text, ids("c", 2), ids("g", 2), "t").is_err());
    }

    fn random_matrix(seed: u64, n_cells: usize, n_genes: usize, density: f64) -> ExpressionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for c in 0..n_cells {
            for g in 0..n_genes {
                if rng.random::<f64>() < density {
                    let v = if rng.random::<bool>() {
                        f64::from(rng.random_range(1..50u32))
                    } else {
                        rng.random::<f64>() * 10.0
                    };
                    trip.push((c, g, v));
                }
            }
        }
        ExpressionMatrix::from_triplets(ids("cell", n_cells), ids("gene", n_genes), trip, NormalizationState::Raw).unwrap()
    }

    #[test]
    fn round_trip_random_sparse() {
        for seed in 0..100 {
            let m = random_matrix(seed, 100, 50, 0.1);
            let text = matrix_market_string(&m);
            let back = parse_matrix_market_str(&text, m.cell_ids().to_vec(), m.gene_ids().to_vec(), "t").unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn select_genes_preserves_order() {
        let m = random_matrix(3, 10, 8, 0.5);
        let sub = m.select_genes(&[1, 4, 6]);
        for c in 0..10 {
            assert_eq!(sub.get(c, 0), m.get(c, 1));
            assert_eq!(sub.get(c, 2), m.get(c, 6));
        }
        assert_eq!(sub.gene_ids(), &["gene1", "gene4", "gene6"]);
    }

    proptest! {
        #[test]
        fn never_panics_on_arbitrary_text(s in "\\PC*") {
            let _ = parse_matrix_market_str(&s, ids("c", 3), ids("g", 3), "fuzz");
        }

        #[test]
        fn never_panics_on_header_plus_garbage(body in "[0-9 \\-\\.e\n%]*") {
            let text = format!("%%MatrixMarket matrix coordinate real general\n{body}");
            let _ = parse_matrix_market_str(&text, ids("c", 3), ids("g", 3), "fuzz");
        }
    }
}
