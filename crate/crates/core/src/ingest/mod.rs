//! Readers and writers for every on-disk format the pipeline consumes.
//!
//! All parsers accept UTF-8 with LF or CRLF line endings and report
//! failures as [`Error::Parse`](crate::Error::Parse) with a 1-based line.

mod annotations;
mod matrix;
mod metadata;
mod newick;
mod obo;

use std::path::Path;

pub use annotations::{annotations_string, parse_annotations, parse_annotations_str, GeneAnnotationMap};
pub use matrix::{
    id_list_string, matrix_market_string, parse_id_list, parse_matrix_market, parse_matrix_market_str,
    write_matrix_market, ExpressionMatrix, NormalizationState,
};
pub use metadata::{metadata_string, parse_metadata, parse_metadata_str, CellMetadata, CellRecord, Split};
pub use newick::{newick_string, parse_newick, parse_newick_file, PhyloNode, PhyloTree, DEFAULT_BRANCH_LENGTH};
pub use obo::{obo_string, parse_obo, parse_obo_str, OntologyDag, Term};

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        Error::parse(&path.display().to_string(), 0, format!("not valid UTF-8: {e}"))
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits on LF and strips a trailing CR from each line.
pub(crate) fn split_lines(text: &str) -> impl Iterator<Item = &str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = text.is_empty();
    body.split('\n')
        .filter(move |_| !empty)
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
}
