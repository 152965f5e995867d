//! Diagnosis taxonomy, differential-diagnosis graph and the DDx neighbour
//! search with its taxonomy fallbacks.
//!
//! Labels are canonicalized (lowercased, trimmed, internal whitespace
//! collapsed) before every insertion and lookup, so `"Melanoma "` and
//! `"melanoma"` name the same node.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Schema version written into and required from every taxonomy / DDx file.
pub const FORMAT_VERSION: u32 = 1;

pub fn canonicalize(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Malignancy {
    #[serde(rename = "benign")]
    Benign,
    #[serde(rename = "malignant")]
    Malignant,
    #[serde(rename = "precancerous in situ")]
    PrecancerousInSitu,
}

impl Malignancy {
    pub const ALL: [Malignancy; 3] = [
        Malignancy::Benign,
        Malignancy::Malignant,
        Malignancy::PrecancerousInSitu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Malignancy::Benign => "benign",
            Malignancy::Malignant => "malignant",
            Malignancy::PrecancerousInSitu => "precancerous in situ",
        }
    }

    /// Fixed letter of the three-class lesion-condition question.
    pub fn letter(self) -> char {
        match self {
            Malignancy::Benign => 'A',
            Malignancy::Malignant => 'B',
            Malignancy::PrecancerousInSitu => 'C',
        }
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        match letter {
            'A' => Some(Malignancy::Benign),
            'B' => Some(Malignancy::Malignant),
            'C' => Some(Malignancy::PrecancerousInSitu),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Malignancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Malignancy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match canonicalize(s).as_str() {
            "benign" => Ok(Malignancy::Benign),
            "malignant" => Ok(Malignancy::Malignant),
            "precancerous in situ" => Ok(Malignancy::PrecancerousInSitu),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub label: String,
    pub parent: Option<String>,
    pub malignancy: Malignancy,
    /// Derived at load time, sorted.
    pub children: Vec<String>,
}

/// One entry of the taxonomy file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub malignancy: String,
}

/// On-disk taxonomy: `{"format_version": 1, "nodes": [{label, parent?, malignancy}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub format_version: u32,
    pub nodes: Vec<NodeRecord>,
}

/// Root-to-label path plus the malignancy of the terminal label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyAnnotation {
    pub path: Vec<String>,
    pub malignancy: Malignancy,
}

impl TaxonomyAnnotation {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn leaf(&self) -> &str {
        self.path.last().map(String::as_str).unwrap_or("")
    }

    /// 1-based depth of `label` on this path, if present.
    pub fn depth_of(&self, label: &str) -> Option<usize> {
        let label = canonicalize(label);
        self.path.iter().position(|l| *l == label).map(|i| i + 1)
    }

    /// Strict ancestors of the leaf, nearest first.
    pub fn ancestors_nearest_first(&self) -> impl Iterator<Item = &str> {
        let n = self.path.len().saturating_sub(1);
        self.path[..n].iter().rev().map(String::as_str)
    }
}

/// Normalized depth weight `depth / path_len`.
pub fn depth_weight(path_len: usize, depth: usize) -> Result<f64> {
    if depth == 0 || depth > path_len {
        return Err(Error::DepthOutOfRange {
            depth,
            len: path_len,
        });
    }
    Ok(depth as f64 / path_len as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyTree {
    nodes: BTreeMap<String, TaxonomyNode>,
    roots: Vec<String>,
    checksum: String,
}

impl TaxonomyTree {
    pub fn from_document(doc: TaxonomyDocument) -> Result<Self> {
        let checksum = sha256_hex(
            serde_json::to_string(&doc)
                .expect("taxonomy document serializes")
                .as_bytes(),
        );
        Self::build(doc, checksum)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: TaxonomyDocument =
            serde_json::from_str(text).map_err(|e| Error::parse("taxonomy", e))?;
        Self::build(doc, sha256_hex(text.as_bytes()))
    }

    /// Convenience constructor from `(label, parent, malignancy)` triples.
    pub fn from_triples<'a>(
        triples: impl IntoIterator<Item = (&'a str, Option<&'a str>, Malignancy)>,
    ) -> Result<Self> {
        let nodes = triples
            .into_iter()
            .map(|(label, parent, m)| NodeRecord {
                label: label.to_string(),
                parent: parent.map(str::to_string),
                malignancy: m.as_str().to_string(),
            })
            .collect();
        Self::from_document(TaxonomyDocument {
            format_version: FORMAT_VERSION,
            nodes,
        })
    }

    fn build(doc: TaxonomyDocument, checksum: String) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let mut nodes: BTreeMap<String, TaxonomyNode> = BTreeMap::new();
        for rec in doc.nodes {
            let label = canonicalize(&rec.label);
            if label.is_empty() {
                return Err(Error::EmptyLabel);
            }
            if nodes.contains_key(&label) {
                return Err(Error::DuplicateLabel(label));
            }
            let malignancy = rec
                .malignancy
                .parse::<Malignancy>()
                .map_err(|value| Error::InvalidMalignancy {
                    label: label.clone(),
                    value,
                })?;
            let parent = rec
                .parent
                .as_deref()
                .map(canonicalize)
                .filter(|p| !p.is_empty());
            nodes.insert(
                label.clone(),
                TaxonomyNode {
                    label,
                    parent,
                    malignancy,
                    children: Vec::new(),
                },
            );
        }

        for node in nodes.values() {
            if let Some(parent) = &node.parent {
                if !nodes.contains_key(parent) {
                    return Err(Error::MissingParent {
                        label: node.label.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }

        // Any walk longer than the node count must revisit a node.
        let limit = nodes.len();
        for start in nodes.keys() {
            let mut cur = start;
            let mut steps = 0;
            while let Some(parent) = nodes[cur].parent.as_ref() {
                steps += 1;
                if parent == start || steps > limit {
                    return Err(Error::Cycle(start.clone()));
                }
                cur = parent;
            }
        }

        let edges: Vec<(String, String)> = nodes
            .values()
            .filter_map(|n| n.parent.clone().map(|p| (p, n.label.clone())))
            .collect();
        for (parent, child) in edges {
            nodes.get_mut(&parent).expect("parent checked").children.push(child);
        }
        // BTreeMap iteration already yields children in sorted order.
        let roots = nodes
            .values()
            .filter(|n| n.parent.is_none())
            .map(|n| n.label.clone())
            .collect();

        Ok(Self {
            nodes,
            roots,
            checksum,
        })
    }

    pub fn to_document(&self) -> TaxonomyDocument {
        TaxonomyDocument {
            format_version: FORMAT_VERSION,
            nodes: self
                .nodes
                .values()
                .map(|n| NodeRecord {
                    label: n.label.clone(),
                    parent: n.parent.clone(),
                    malignancy: n.malignancy.as_str().to_string(),
                })
                .collect(),
        }
    }

    /// SHA-256 of the source bytes (or of the canonical document when built
    /// in memory).
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[String] {
        &self.roots
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values()
    }

    pub fn get(&self, label: &str) -> Option<&TaxonomyNode> {
        match self.nodes.get(label) {
            Some(n) => Some(n),
            None => self.nodes.get(&canonicalize(label)),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.get(label).is_some()
    }

    pub fn parent(&self, label: &str) -> Option<&str> {
        self.get(label).and_then(|n| n.parent.as_deref())
    }

    pub fn children(&self, label: &str) -> &[String] {
        self.get(label).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn malignancy(&self, label: &str) -> Option<Malignancy> {
        self.get(label).map(|n| n.malignancy)
    }

    /// 1-based depth (roots have depth 1).
    pub fn depth(&self, label: &str) -> Option<usize> {
        let mut node = self.get(label)?;
        let mut depth = 1;
        while let Some(p) = node.parent.as_deref() {
            node = &self.nodes[p];
            depth += 1;
        }
        Some(depth)
    }

    pub fn path_of(&self, label: &str) -> Result<TaxonomyAnnotation> {
        let leaf = self
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(canonicalize(label)))?;
        let mut path = vec![leaf.label.clone()];
        let mut node = leaf;
        while let Some(p) = node.parent.as_deref() {
            node = &self.nodes[p];
            path.push(node.label.clone());
        }
        path.reverse();
        Ok(TaxonomyAnnotation {
            path,
            malignancy: leaf.malignancy,
        })
    }

    /// `label` and all of its descendants. Empty for unknown labels.
    pub fn subtree(&self, label: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let Some(start) = self.get(label) else {
            return out;
        };
        let mut stack = vec![start.label.as_str()];
        while let Some(l) = stack.pop() {
            out.insert(l.to_string());
            stack.extend(self.children(l).iter().map(String::as_str));
        }
        out
    }

    /// Labels sharing a root with `label`, the default local pool for
    /// distractor sampling.
    pub fn same_root(&self, label: &str) -> BTreeSet<String> {
        match self.path_of(label) {
            Ok(a) => self.subtree(&a.path[0]),
            Err(_) => BTreeSet::new(),
        }
    }

    /// Checks that `path` is a root-to-node walk of this tree.
    pub fn is_valid_path(&self, path: &[String]) -> bool {
        let Some(first) = path.first() else {
            return false;
        };
        if self.get(first).is_none_or(|n| n.parent.is_some()) {
            return false;
        }
        path.windows(2)
            .all(|w| self.parent(&w[1]) == Some(canonicalize(&w[0]).as_str()))
    }

    /// `(child, parent)` pairs whose malignancy categories differ. Not an
    /// error; surfaced as load warnings.
    pub fn malignancy_mismatches(&self) -> Vec<(String, String)> {
        self.nodes
            .values()
            .filter_map(|n| {
                let p = n.parent.as_deref()?;
                (self.nodes[p].malignancy != n.malignancy).then(|| (n.label.clone(), p.to_string()))
            })
            .collect()
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<TaxonomyTree> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TaxonomyTree::from_json_str(&text)
}

/// On-disk DDx graph: `{"format_version": 1, "edges": [["a", "b"], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdxDocument {
    pub format_version: u32,
    pub edges: Vec<(String, String)>,
}

/// Undirected differential-diagnosis graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DdxGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
    dropped_self_loops: Vec<String>,
}

impl DdxGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges<A: AsRef<str>, B: AsRef<str>>(edges: impl IntoIterator<Item = (A, B)>) -> Self {
        let mut g = Self::new();
        for (a, b) in edges {
            g.add_edge(a.as_ref(), b.as_ref());
        }
        g
    }

    pub fn from_document(doc: DdxDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(Self::from_edges(doc.edges))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: DdxDocument = serde_json::from_str(text).map_err(|e| Error::parse("ddx graph", e))?;
        Self::from_document(doc)
    }

    pub fn to_document(&self) -> DdxDocument {
        let edges = self
            .adjacency
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (a.clone(), b.clone())))
            .collect();
        DdxDocument {
            format_version: FORMAT_VERSION,
            edges,
        }
    }

    /// Inserts both directions. Self-loops are dropped and remembered.
    pub fn add_edge(&mut self, a: &str, b: &str) {
        let (a, b) = (canonicalize(a), canonicalize(b));
        if a.is_empty() || b.is_empty() {
            return;
        }
        if a == b {
            self.dropped_self_loops.push(a);
            return;
        }
        self.adjacency.entry(a.clone()).or_default().insert(b.clone());
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn contains(&self, label: &str) -> bool {
        self.adjacency.contains_key(&canonicalize(label))
    }

    /// Neighbours in lexicographic order; empty when the label is absent.
    pub fn neighbors(&self, label: &str) -> Option<&BTreeSet<String>> {
        self.adjacency.get(label).or_else(|| self.adjacency.get(&canonicalize(label)))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn dropped_self_loops(&self) -> &[String] {
        &self.dropped_self_loops
    }

    /// Graph labels that do not resolve in `tree` (load warnings).
    pub fn unresolved_labels(&self, tree: &TaxonomyTree) -> Vec<String> {
        self.adjacency
            .keys()
            .filter(|l| !tree.contains(l))
            .cloned()
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().all(|(a, ns)| {
            ns.iter()
                .all(|b| b != a && self.adjacency.get(b).is_some_and(|back| back.contains(a)))
        })
    }
}

pub fn load_ddx(path: impl AsRef<Path>) -> Result<DdxGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DdxGraph::from_json_str(&text)
}

/// Case ids grouped by canonical diagnosis, ids sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseIndex {
    by_diagnosis: BTreeMap<String, Vec<String>>,
}

impl CaseIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<D: AsRef<str>, I: Into<String>>(pairs: impl IntoIterator<Item = (D, I)>) -> Self {
        let mut idx = Self::new();
        for (d, id) in pairs {
            idx.insert(d.as_ref(), id.into());
        }
        idx
    }

    pub fn insert(&mut self, diagnosis: &str, case_id: String) {
        let ids = self.by_diagnosis.entry(canonicalize(diagnosis)).or_default();
        let pos = ids.binary_search(&case_id).unwrap_or_else(|p| p);
        ids.insert(pos, case_id);
    }

    pub fn count(&self, diagnosis: &str) -> usize {
        self.by_diagnosis.get(diagnosis).map_or(0, Vec::len)
    }

    pub fn has_cases(&self, diagnosis: &str) -> bool {
        self.count(diagnosis) > 0
    }

    /// Lowest case id carrying `diagnosis`.
    pub fn first_case(&self, diagnosis: &str) -> Option<&str> {
        self.by_diagnosis
            .get(diagnosis)
            .and_then(|ids| ids.first())
            .map(String::as_str)
    }

    pub fn diagnoses(&self) -> impl Iterator<Item = &str> {
        self.by_diagnosis
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(d, _)| d.as_str())
    }
}

/// Candidate differentials for `d`: its own DDx neighbours, else those of
/// its taxonomy parent, else `None`.
pub fn ddx_candidates<'g>(
    d: &str,
    ddx: &'g DdxGraph,
    tree: &TaxonomyTree,
) -> Option<&'g BTreeSet<String>> {
    let d = canonicalize(d);
    if let Some(adj) = ddx.neighbors(&d).filter(|a| !a.is_empty()) {
        return Some(adj);
    }
    let parent = tree.parent(&d)?;
    ddx.neighbors(parent).filter(|a| !a.is_empty())
}

/// Finds a differential diagnosis for `d` that has at least one case.
///
/// Walks the candidates from [`ddx_candidates`] in lexicographic order and
/// returns the first one with cases; otherwise the first (lexicographic)
/// taxonomy child of that candidate with cases. `d` itself is never
/// returned.
pub fn resolve_ddx_neighbor(
    d: &str,
    ddx: &DdxGraph,
    tree: &TaxonomyTree,
    cases: &CaseIndex,
) -> Option<String> {
    let d = canonicalize(d);
    let candidates = ddx_candidates(&d, ddx, tree)?;
    for c in candidates {
        if *c == d {
            continue;
        }
        if cases.has_cases(c) {
            return Some(c.clone());
        }
        if let Some(child) = tree
            .children(c)
            .iter()
            .find(|child| **child != d && cases.has_cases(child))
        {
            return Some(child.clone());
        }
    }
    None
}
