//! Newick trees. Parsing and writing are iterative so that deeply nested
//! input cannot exhaust the stack.

use std::collections::HashMap;
use std::path::Path;

use super::read_text;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhyloNode {
    pub name: Option<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Length of the branch to the parent as written; `None` when absent.
    pub length: Option<f64>,
}

/// Rooted tree with named leaves. Nodes are stored in preorder, so a
/// parent always has a smaller index than its children and the root is 0.
#[derive(Debug, Clone)]
pub struct PhyloTree {
    nodes: Vec<PhyloNode>,
    leaves: HashMap<String, usize>,
    depth: Vec<usize>,
}

impl PartialEq for PhyloTree {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

/// Branch length used when a Newick node carries no `:length`.
pub const DEFAULT_BRANCH_LENGTH: f64 = 1.0;

impl PhyloTree {
    fn from_nodes(nodes: Vec<PhyloNode>) -> Result<Self> {
        let mut leaves = HashMap::new();
        let mut depth = vec![0usize; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                depth[i] = depth[p] + 1;
            }
            if n.children.is_empty() {
                let name = n.name.clone().ok_or_else(|| Error::Data("unnamed leaf".into()))?;
                if leaves.insert(name.clone(), i).is_some() {
                    return Err(Error::Data(format!("duplicate leaf name `{name}`")));
                }
            }
        }
        Ok(PhyloTree { nodes, leaves, depth })
    }

    /// Builds a tree from `(child_name_or_none, parent_index, length)` rows
    /// in preorder. Used by the synthetic generator.
    pub fn from_parent_links(nodes: Vec<PhyloNode>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            match n.parent {
                None if i != 0 => return Err(Error::Data("more than one root".into())),
                Some(p) if p >= i => return Err(Error::Data("nodes must be in preorder".into())),
                _ => {}
            }
            if n.length.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
                return Err(Error::Data("branch lengths must be finite and non-negative".into()));
            }
        }
        Self::from_nodes(nodes)
    }

    pub fn nodes(&self) -> &[PhyloNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, name: &str) -> Option<usize> {
        self.leaves.get(name).copied()
    }

    /// Leaf names in preorder.
    pub fn leaf_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .filter_map(|n| n.name.as_deref())
            .collect()
    }

    /// Effective length of the branch above node `i` (0 for the root).
    pub fn branch_length(&self, i: usize) -> f64 {
        if self.nodes[i].parent.is_none() {
            return 0.0;
        }
        self.nodes[i].length.unwrap_or(DEFAULT_BRANCH_LENGTH)
    }

    /// True when no non-root branch carried an explicit length.
    pub fn all_lengths_defaulted(&self) -> bool {
        self.nodes.iter().skip(1).all(|n| n.length.is_none())
    }

    /// Sum of branch lengths on the unique path between two nodes.
    pub fn path_length(&self, a: usize, b: usize) -> f64 {
        let (mut a, mut b) = (a, b);
        let (mut up_a, mut up_b) = (0.0, 0.0);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                up_a += self.branch_length(a);
                a = self.nodes[a].parent.expect("non-root");
            } else {
                up_b += self.branch_length(b);
                b = self.nodes[b].parent.expect("non-root");
            }
        }
        up_a + up_b
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        let line = 1 + self.bytes[..self.pos.min(self.bytes.len())].iter().filter(|&&b| b == b'\n').count();
        Error::parse("newick", line, format!("{} (offset {})", msg.into(), self.pos))
    }

    fn skip_ws(&mut self) -> Result<()> {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b if b.is_ascii_whitespace() => self.pos += 1,
                b'[' => match self.text[self.pos..].find(']') {
                    Some(end) => self.pos += end + 1,
                    None => return Err(self.err("unterminated comment")),
                },
                _ => break,
            }
        }
        Ok(())
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn label(&mut self) -> Result<Option<String>> {
        self.skip_ws()?;
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut out = String::new();
            loop {
                let rest = &self.text[self.pos..];
                let Some(q) = rest.find('\'') else {
                    return Err(self.err("unterminated quoted label"));
                };
                out.push_str(&rest[..q]);
                self.pos += q + 1;
                if self.peek() == Some(b'\'') {
                    out.push('\'');
                    self.pos += 1;
                } else {
                    break;
                }
            }
            return Ok(Some(out));
        }
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b"()[]':;,".contains(&b) {
                break;
            }
            self.pos += 1;
        }
        let s = &self.text[start..self.pos];
        Ok((!s.is_empty()).then(|| s.to_string()))
    }

    fn length(&mut self) -> Result<Option<f64>> {
        self.skip_ws()?;
        if self.peek() != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws()?;
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() || b"+-.eE".contains(&b) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = &self.text[start..self.pos];
        let v: f64 = s.parse().map_err(|_| self.err(format!("invalid branch length `{s}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite branch length `{s}`")));
        }
        if v < 0.0 {
            return Err(self.err(format!("negative branch length {v}")));
        }
        Ok(Some(v))
    }
}

/// Parses a single Newick expression terminated by `;`.
pub fn parse_newick(text: &str) -> Result<PhyloTree> {
    let mut cur = Cursor {
        bytes: text.as_bytes(),
        text,
        pos: 0,
    };
    let mut nodes: Vec<PhyloNode> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut seen_leaves: HashMap<String, ()> = HashMap::new();

    let add = |nodes: &mut Vec<PhyloNode>, parent: Option<usize>| -> usize {
        let id = nodes.len();
        nodes.push(PhyloNode {
            name: None,
            parent,
            children: Vec::new(),
            length: None,
        });
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        id
    };

    let mut expect_child = true;
    loop {
        cur.skip_ws()?;
        if expect_child {
            if !nodes.is_empty() && open.is_empty() {
                return Err(cur.err("unexpected content after the tree"));
            }
            if cur.peek() == Some(b'(') {
                let id = add(&mut nodes, open.last().copied());
                open.push(id);
                cur.pos += 1;
                continue;
            }
            let id = add(&mut nodes, open.last().copied());
            let name = cur.label()?.ok_or_else(|| cur.err("unnamed leaf"))?;
            if seen_leaves.insert(name.clone(), ()).is_some() {
                return Err(cur.err(format!("duplicate leaf name `{name}`")));
            }
            nodes[id].name = Some(name);
            nodes[id].length = cur.length()?;
            expect_child = false;
            continue;
        }
        match cur.peek() {
            Some(b',') => {
                if open.is_empty() {
                    return Err(cur.err("`,` outside parentheses"));
                }
                cur.pos += 1;
                expect_child = true;
            }
            Some(b')') => {
                let id = open.pop().ok_or_else(|| cur.err("unbalanced parentheses: unexpected `)`"))?;
                cur.pos += 1;
                nodes[id].name = cur.label()?;
                nodes[id].length = cur.length()?;
            }
            Some(b';') => {
                if !open.is_empty() {
                    return Err(cur.err("unbalanced parentheses: missing `)`"));
                }
                cur.pos += 1;
                cur.skip_ws()?;
                if cur.pos != cur.bytes.len() {
                    return Err(cur.err("trailing content after `;`"));
                }
                break;
            }
            Some(b) => return Err(cur.err(format!("unexpected character `{}`", b as char))),
            None => {
                return Err(if open.is_empty() {
                    cur.err("missing terminating `;`")
                } else {
                    cur.err("unbalanced parentheses: missing `)`")
                })
            }
        }
    }
    PhyloTree::from_nodes(nodes).map_err(|e| cur.err(e.to_string()))
}

pub fn parse_newick_file(path: &Path) -> Result<PhyloTree> {
    parse_newick(&read_text(path)?).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::parse(&path.display().to_string(), line, message),
        other => other,
    })
}

fn push_label(out: &mut String, name: &str) {
    let plain = !name.is_empty()
        && !name
            .bytes()
            .any(|b| b.is_ascii_whitespace() || b"()[]':;,".contains(&b));
    if plain {
        out.push_str(name);
    } else {
        out.push('\'');
        out.push_str(&name.replace('\'', "''"));
        out.push('\'');
    }
}

fn push_node_suffix(out: &mut String, n: &PhyloNode) {
    if let Some(name) = &n.name {
        push_label(out, name);
    }
    if let Some(l) = n.length {
        out.push(':');
        out.push_str(&l.to_string());
    }
}

pub fn newick_string(tree: &PhyloTree) -> String {
    let mut out = String::new();
    let nodes = &tree.nodes;
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    while let Some(top) = stack.last_mut() {
        let (n, next) = *top;
        let children = &nodes[n].children;
        if children.is_empty() {
            push_node_suffix(&mut out, &nodes[n]);
            stack.pop();
            continue;
        }
        if next == 0 {
            out.push('(');
        }
        if next < children.len() {
            if next > 0 {
                out.push(',');
            }
            top.1 += 1;
            stack.push((children[next], 0));
        } else {
            out.push(')');
            push_node_suffix(&mut out, &nodes[n]);
            stack.pop();
        }
    }
    out.push_str(";\n");
    out
}
