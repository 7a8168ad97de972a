//! OBO 1.2 subset: `[Term]` stanzas with `id`, `name`, `is_a` and
//! `is_obsolete`. Every other tag and stanza type is ignored.

use std::collections::HashMap;
use std::path::Path;

use super::{read_text, split_lines};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub id: String,
    pub name: String,
}

/// Ontology terms with child → parent `is_a` edges. Acyclic by
/// construction.
#[derive(Debug, Clone)]
pub struct OntologyDag {
    terms: Vec<Term>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PartialEq for OntologyDag {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms && self.parents == other.parents
    }
}

impl OntologyDag {
    /// Builds a DAG from terms and `(child, parent)` id pairs, rejecting
    /// unknown endpoints and cycles.
    pub fn new(terms: Vec<Term>, edges: &[(String, String)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate term id `{}`", t.id)));
            }
        }
        let mut parents = vec![Vec::new(); terms.len()];
        for (c, p) in edges {
            let ci = *index.get(c).ok_or_else(|| Error::UnknownTerm(c.clone()))?;
            let pi = *index.get(p).ok_or_else(|| Error::UnknownTerm(p.clone()))?;
            if !parents[ci].contains(&pi) {
                parents[ci].push(pi);
            }
        }
        Self::from_parts(terms, index, parents)
    }

    fn from_parts(terms: Vec<Term>, index: HashMap<String, usize>, parents: Vec<Vec<usize>>) -> Result<Self> {
        let mut children = vec![Vec::new(); terms.len()];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut dag = OntologyDag {
            terms,
            index,
            parents,
            children,
            topo: Vec::new(),
        };
        dag.topo = dag.topological_order()?;
        Ok(dag)
    }

    /// Kahn's algorithm, roots first, always taking the lowest ready index.
    fn topological_order(&self) -> Result<Vec<usize>> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let n = self.terms.len();
        let mut pending: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| pending[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(t)) = ready.pop() {
            order.push(t);
            for &c in &self.children[t] {
                pending[c] -= 1;
                if pending[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() < n {
            return Err(Error::Cycle(self.describe_cycle(&pending)));
        }
        Ok(order)
    }

    /// Walks parent links among unresolved terms until a term repeats.
    fn describe_cycle(&self, pending: &[usize]) -> String {
        let start = pending.iter().position(|&p| p > 0).unwrap_or(0);
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&pos) = seen.get(&cur) {
                let mut ids: Vec<&str> = path[pos..].iter().map(|&t: &usize| self.terms[t].id.as_str()).collect();
                ids.push(&self.terms[cur].id);
                return ids.join(" -> ");
            }
            seen.insert(cur, path.len());
            path.push(cur);
            match self.parents[cur].iter().find(|&&p| pending[p] > 0) {
                Some(&p) => cur = p,
                None => return self.terms[cur].id.clone(),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term(&self, i: usize) -> &Term {
        &self.terms[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// `(child, parent)` index pairs in declaration order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (c, p)))
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// All strict ancestors of `i`, sorted by index.
    pub fn ancestors(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack = self.parents[i].clone();
        let mut out = Vec::new();
        while let Some(t) = stack.pop() {
            if !seen[t] {
                seen[t] = true;
                out.push(t);
                stack.extend_from_slice(&self.parents[t]);
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Default)]
struct Stanza {
    line: usize,
    id: Option<String>,
    name: Option<String>,
    is_a: Vec<(String, usize)>,
    obsolete: bool,
}

/// Strips the trailing `! comment` and `{qualifiers}` of a tag value.
fn tag_value(raw: &str) -> &str {
    let v = raw.split(" !").next().unwrap_or(raw);
    let v = match v.find('{') {
        Some(p) => &v[..p],
        None => v,
    };
    v.trim()
}

pub fn parse_obo_str(text: &str, source_name: &str) -> Result<OntologyDag> {
    let err = |line: usize, msg: String| Error::parse(source_name, line, msg);
    let mut stanzas: Vec<Stanza> = Vec::new();
    let mut in_term = false;
    for (i, raw) in split_lines(text).enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('!') {
            continue;
        }
        if line.starts_with('[') {
            in_term = line == "[Term]";
            if in_term {
                stanzas.push(Stanza { line: ln, ..Stanza::default() });
            }
            continue;
        }
        if !in_term {
            continue;
        }
        let Some((tag, value)) = line.split_once(':') else {
            return Err(err(ln, format!("expected `tag: value`, got `{line}`")));
        };
        let st = stanzas.last_mut().expect("inside a [Term] stanza");
        let value = tag_value(value);
        match tag.trim() {
            "id" => {
                if st.id.is_some() {
                    return Err(err(ln, "stanza has more than one id".into()));
                }
                if value.is_empty() {
                    return Err(err(ln, "empty id".into()));
                }
                st.id = Some(value.to_string());
            }
            "name" => {
                if st.name.is_none() {
                    st.name = Some(value.to_string());
                }
            }
            "is_a" => {
                if value.is_empty() {
                    return Err(err(ln, "empty is_a target".into()));
                }
                st.is_a.push((value.to_string(), ln));
            }
            "is_obsolete" => st.obsolete = value == "true",
            _ => {}
        }
    }

    let mut terms = Vec::new();
    let mut index = HashMap::new();
    let mut live = Vec::new();
    for st in &stanzas {
        let id = st.id.clone().ok_or_else(|| err(st.line, "[Term] stanza without id".into()))?;
        if st.obsolete {
            continue;
        }
        if index.insert(id.clone(), terms.len()).is_some() {
            return Err(err(st.line, format!("duplicate term id `{id}`")));
        }
        terms.push(Term {
            id,
            name: st.name.clone().unwrap_or_default(),
        });
        live.push(st);
    }
    let mut parents = vec![Vec::new(); terms.len()];
    for (ci, st) in live.iter().enumerate() {
        for (target, ln) in &st.is_a {
            let pi = *index
                .get(target)
                .ok_or_else(|| err(*ln, format!("is_a target `{target}` is not a declared term")))?;
            if !parents[ci].contains(&pi) {
                parents[ci].push(pi);
            }
        }
    }
    OntologyDag::from_parts(terms, index, parents)
}

pub fn parse_obo(path: &Path) -> Result<OntologyDag> {
    parse_obo_str(&read_text(path)?, &path.display().to_string())
}

pub fn obo_string(dag: &OntologyDag) -> String {
    let mut out = String::from("format-version: 1.2\n");
    for (i, t) in dag.terms.iter().enumerate() {
        out.push_str("\n[Term]\n");
        out.push_str(&format!("id: {}\n", t.id));
        if !t.name.is_empty() {
            out.push_str(&format!("name: {}\n", t.name));
        }
        for &p in &dag.parents[i] {
            out.push_str(&format!("is_a: {} ! {}\n", dag.terms[p].id, dag.terms[p].name));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SMALL: &str = "format-version: 1.2\n\n[Term]\nid: CL:0\nname: cell\n\n\
                         [Term]\nid: CL:1\nname: neuron\nis_a: CL:0 ! cell\n\n\
                         [Term]\nid: CL:2\nname: glia\nis_a: CL:0 ! cell\nrelationship: part_of CL:1\n";

    #[test]
    fn parses_three_terms_two_edges() {
        let dag = parse_obo_str(SMALL, "t").unwrap();
        assert_eq!(dag.len(), 3);
        assert_eq!(dag.n_edges(), 2);
        assert_eq!(dag.term(1).name, "neuron");
        assert_eq!(dag.parents(2), &[0]);
        assert_eq!(dag.topo_order()[0], 0);
    }

    #[test]
    fn obsolete_terms_are_dropped_and_unreferenceable() {
        let text = "[Term]\nid: A\n\n[Term]\nid: B\nis_obsolete: true\n";
        let dag = parse_obo_str(text, "t").unwrap();
        assert_eq!(dag.len(), 1);
        let bad = "[Term]\nid: A\nis_a: B\n\n[Term]\nid: B\nis_obsolete: true\n";
        assert!(matches!(parse_obo_str(bad, "t"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let err = parse_obo_str("[Term]\nid: A\nis_a: A\n", "t").unwrap_err();
        match err {
            Error::Cycle(c) => assert_eq!(c, "A -> A"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn longer_cycle_is_named() {
        let text = "[Term]\nid: A\nis_a: C\n\n[Term]\nid: B\nis_a: A\n\n[Term]\nid: C\nis_a: B\n\n[Term]\nid: D\n";
        match parse_obo_str(text, "t").unwrap_err() {
            Error::Cycle(c) => {
                assert!(c.contains("A") && c.contains("B") && c.contains("C") && !c.contains("D"), "{c}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn undeclared_parent_is_an_error() {
        assert!(parse_obo_str("[Term]\nid: A\nis_a: Z\n", "t").is_err());
    }

    #[test]
    fn typedef_stanzas_are_ignored() {
        let text = "[Typedef]\nid: part_of\nname: part of\n\n[Term]\nid: A\n";
        assert_eq!(parse_obo_str(text, "t").unwrap().len(), 1);
    }

    fn random_dag(seed: u64) -> OntologyDag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..40);
        let terms: Vec<Term> = (0..n)
            .map(|i| Term {
                id: format!("T:{i:04}"),
                name: format!("term number {i}"),
            })
            .collect();
        let mut edges = Vec::new();
        for c in 1..n {
            for p in 0..c {
                if rng.random::<f64>() < 0.1 {
                    edges.push((terms[c].id.clone(), terms[p].id.clone()));
                }
            }
        }
        OntologyDag::new(terms, &edges).unwrap()
    }

    #[test]
    fn round_trip_random_dags() {
        for seed in 0..100 {
            let dag = random_dag(seed);
            let back = parse_obo_str(&obo_string(&dag), "t").unwrap();
            assert_eq!(back, dag);
            assert_eq!(back.topo_order(), dag.topo_order());
        }
    }

    proptest! {
        #[test]
        fn never_panics(s in "\\PC*") {
            let _ = parse_obo_str(&s, "fuzz");
        }

        #[test]
        fn never_panics_on_stanza_soup(s in "(\\[Term\\]\n|id: [AB]\n|is_a: [AB]\n|is_obsolete: true\n|name: x\n){0,20}") {
            let _ = parse_obo_str(&s, "fuzz");
        }
    }
}
