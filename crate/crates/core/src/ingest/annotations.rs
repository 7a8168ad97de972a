use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{read_text, split_lines, OntologyDag};
use crate::error::{Error, Result};

/// Direct gene → GO term annotations. Genes absent from the map are
/// unannotated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeneAnnotationMap {
    by_gene: BTreeMap<String, BTreeSet<String>>,
}

impl GeneAnnotationMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one annotation; the term must exist in `go`.
    pub fn insert(&mut self, gene: &str, term: &str, go: &OntologyDag) -> Result<()> {
        if go.index_of(term).is_none() {
            return Err(Error::UnknownTerm(term.to_string()));
        }
        self.by_gene.entry(gene.to_string()).or_default().insert(term.to_string());
        Ok(())
    }

    pub fn terms_of(&self, gene: &str) -> Option<&BTreeSet<String>> {
        self.by_gene.get(gene)
    }

    pub fn is_empty(&self) -> bool {
        self.by_gene.is_empty()
    }

    pub fn n_genes(&self) -> usize {
        self.by_gene.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.by_gene.iter().map(|(g, t)| (g.as_str(), t))
    }
}

/// Parses `gene<TAB>term` lines. Any run of whitespace separates the two
/// fields; blank lines and `#` comments are skipped.
pub fn parse_annotations_str(text: &str, go: &OntologyDag, source_name: &str) -> Result<GeneAnnotationMap> {
    let mut map = GeneAnnotationMap::new();
    for (i, line) in split_lines(text).enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(source_name, ln, format!("expected `gene term`, got `{line}`")));
        }
        map.insert(fields[0], fields[1], go)
            .map_err(|e| Error::parse(source_name, ln, e.to_string()))?;
    }
    Ok(map)
}

pub fn parse_annotations(path: &Path, go: &OntologyDag) -> Result<GeneAnnotationMap> {
    parse_annotations_str(&read_text(path)?, go, &path.display().to_string())
}

pub fn annotations_string(map: &GeneAnnotationMap) -> String {
    let mut out = String::new();
    for (gene, terms) in map.iter() {
        for t in terms {
            out.push_str(gene);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_obo_str;

    fn go() -> OntologyDag {
        parse_obo_str(
            "[Term]\nid: GO:1\nname: one\n\n[Term]\nid: GO:2\nname: two\nis_a: GO:1\n",
            "go",
        )
        .unwrap()
    }

    #[test]
    fn builds_term_sets() {
        let m = parse_annotations_str("g1\tGO:1\ng1 GO:2\n\ng2\tGO:1\n", &go(), "a").unwrap();
        assert_eq!(m.terms_of("g1").unwrap().len(), 2);
        assert_eq!(m.terms_of("g2").unwrap().iter().collect::<Vec<_>>(), vec!["GO:1"]);
        assert!(m.terms_of("g3").is_none());
    }

    #[test]
    fn duplicates_collapse() {
        let m = parse_annotations_str("g1\tGO:1\ng1\tGO:1\n", &go(), "a").unwrap();
        assert_eq!(m.terms_of("g1").unwrap().len(), 1);
    }

    #[test]
    fn unknown_term_names_line() {
        let err = parse_annotations_str("g1\tGO:1\ng2\tGO:9\n", &go(), "a").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn round_trip() {
        let m = parse_annotations_str("g2\tGO:2\ng1\tGO:1\ng1\tGO:2\n", &go(), "a").unwrap();
        let back = parse_annotations_str(&annotations_string(&m), &go(), "a").unwrap();
        assert_eq!(back, m);
    }
}
