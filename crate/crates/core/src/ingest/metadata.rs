use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, split_lines, ExpressionMatrix, PhyloTree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Reference,
    Query,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Reference => "reference",
            Split::Query => "query",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    pub species: String,
    pub cell_type: Option<String>,
    pub domain: String,
    pub split: Split,
}

/// Per-cell annotations, kept in the same order as the companion matrix
/// once [`CellMetadata::aligned_to`] has been applied.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellMetadata {
    pub records: Vec<CellRecord>,
}

pub const METADATA_HEADER: [&str; 5] = ["cell_id", "species", "cell_type", "domain", "split"];

impl CellMetadata {
    pub fn new(records: Vec<CellRecord>) -> Self {
        CellMetadata { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, i: usize) -> &CellRecord {
        &self.records[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CellRecord> {
        self.records.iter()
    }

    /// Reorders records to the matrix cell order. Fails unless cell ids
    /// match bijectively.
    pub fn aligned_to(&self, matrix: &ExpressionMatrix) -> Result<CellMetadata> {
        if self.records.len() != matrix.n_cells() {
            return Err(Error::Data(format!(
                "metadata has {} cells, matrix has {}",
                self.records.len(),
                matrix.n_cells()
            )));
        }
        let mut by_id: HashMap<&str, &CellRecord> = HashMap::with_capacity(self.records.len());
        for r in &self.records {
            if by_id.insert(r.cell_id.as_str(), r).is_some() {
                return Err(Error::Data(format!("duplicate metadata cell id `{}`", r.cell_id)));
            }
        }
        let records = matrix
            .cell_ids()
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::Data(format!("cell `{id}` has no metadata row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CellMetadata { records })
    }

    /// Checks the per-record invariants against the phylogeny.
    pub fn validate(&self, tree: &PhyloTree) -> Result<()> {
        for r in &self.records {
            if r.split == Split::Reference && r.cell_type.is_none() {
                return Err(Error::Data(format!("reference cell `{}` has no cell_type", r.cell_id)));
            }
            if tree.leaf(&r.species).is_none() {
                return Err(Error::UnknownSpecies(r.species.clone()));
            }
        }
        Ok(())
    }

    pub fn select(&self, cells: &[usize]) -> CellMetadata {
        CellMetadata {
            records: cells.iter().map(|&c| self.records[c].clone()).collect(),
        }
    }
}

pub fn parse_metadata_str(text: &str, source_name: &str) -> Result<CellMetadata> {
    let mut lines = split_lines(text).enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(source_name, 1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    if cols != METADATA_HEADER {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header `{}`", METADATA_HEADER.join("\t")),
        ));
    }
    let mut records = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(source_name, ln, format!("expected 5 fields, got {}", f.len())));
        }
        if f[0].is_empty() || f[1].is_empty() || f[3].is_empty() {
            return Err(Error::parse(source_name, ln, "cell_id, species and domain must be non-empty"));
        }
        let split = match f[4].to_ascii_lowercase().as_str() {
            "reference" => Split::Reference,
            "query" => Split::Query,
            other => return Err(Error::parse(source_name, ln, format!("unknown split `{other}`"))),
        };
        let cell_type = (!f[2].is_empty()).then(|| f[2].to_string());
        if split == Split::Reference && cell_type.is_none() {
            return Err(Error::parse(source_name, ln, "reference cell without cell_type"));
        }
        records.push(CellRecord {
            cell_id: f[0].to_string(),
            species: f[1].to_string(),
            cell_type,
            domain: f[3].to_string(),
            split,
        });
    }
    Ok(CellMetadata { records })
}

pub fn parse_metadata(path: &Path) -> Result<CellMetadata> {
    parse_metadata_str(&read_text(path)?, &path.display().to_string())
}

pub fn metadata_string(meta: &CellMetadata) -> String {
    let mut out = METADATA_HEADER.join("\t");
    out.push('\n');
    for r in &meta.records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.cell_id,
            r.species,
            r.cell_type.as_deref().unwrap_or(""),
            r.domain,
            r.split.as_str()
        ));
    }
    out
}
