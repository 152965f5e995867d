//! Independent reference implementations. They read only the raw
//! documents (node records, edge lists, case pairs) and never call the
//! library routines they check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dermrl_core::taxonomy::{DdxDocument, TaxonomyDocument};

pub struct RawTree {
    parent: BTreeMap<String, Option<String>>,
}

impl RawTree {
    pub fn new(doc: &TaxonomyDocument) -> Self {
        Self {
            parent: doc.nodes.iter().map(|n| (n.label.clone(), n.parent.clone())).collect(),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &String> {
        self.parent.keys()
    }

    pub fn parent(&self, label: &str) -> Option<&str> {
        self.parent.get(label)?.as_deref()
    }

    /// Children by full scan, sorted.
    pub fn children(&self, label: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .parent
            .iter()
            .filter(|(_, p)| p.as_deref() == Some(label))
            .map(|(c, _)| c.clone())
            .collect();
        out.sort();
        out
    }

    pub fn path(&self, label: &str) -> Vec<String> {
        let mut path = vec![label.to_string()];
        let mut cur = label;
        while let Some(p) = self.parent(cur) {
            path.push(p.to_string());
            cur = p;
        }
        path.reverse();
        path
    }
}

/// `scale * sum_i (i / L) * [pred == path_i]` over 1-based positions.
pub fn gran(pred: &str, path: &[String], scale: f64) -> f64 {
    let l = path.len() as f64;
    let mut acc = 0.0;
    for (i, node) in path.iter().enumerate() {
        let w = (i + 1) as f64 / l;
        let delta = if node == pred { 1.0 } else { 0.0 };
        acc += w * delta;
    }
    scale * acc
}

/// Neighbour sets rebuilt from the raw edge list, self-loops ignored.
pub fn adjacency(doc: &DdxDocument) -> BTreeMap<String, BTreeSet<String>> {
    let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (a, b) in &doc.edges {
        if a == b {
            continue;
        }
        adj.entry(a.clone()).or_default().insert(b.clone());
        adj.entry(b.clone()).or_default().insert(a.clone());
    }
    adj
}

/// Every admissible answer in scan order: candidate `c` itself, then each
/// child of `c`. The first admissible entry is the result.
pub fn ddx_fallback(
    d: &str,
    tree: &RawTree,
    adj: &BTreeMap<String, BTreeSet<String>>,
    case_pairs: &[(String, String)],
) -> Option<String> {
    let has_cases = |l: &str| case_pairs.iter().any(|(dx, _)| dx == l);
    let own = adj.get(d).cloned().unwrap_or_default();
    let candidates = if !own.is_empty() {
        own
    } else {
        match tree.parent(d) {
            Some(p) => adj.get(p).cloned().unwrap_or_default(),
            None => BTreeSet::new(),
        }
    };
    let mut sequence: Vec<String> = Vec::new();
    for c in &candidates {
        if c == d {
            continue;
        }
        sequence.push(c.clone());
        if !has_cases(c) {
            sequence.extend(tree.children(c).into_iter().filter(|x| x != d));
        }
    }
    sequence.into_iter().find(|l| has_cases(l))
}

/// Macro-F1 over A/B/C from the full 3x4 confusion matrix (the fourth
/// column holds unextractable predictions), via precision and recall.
pub fn macro_f1(pairs: &[(char, Option<char>)]) -> f64 {
    let classes = ['A', 'B', 'C'];
    let col = |p: Option<char>| p.and_then(|c| classes.iter().position(|k| *k == c)).unwrap_or(3);
    let mut m = [[0usize; 4]; 3];
    for &(t, p) in pairs {
        let row = classes.iter().position(|k| *k == t).expect("truth is a class");
        m[row][col(p)] += 1;
    }
    let mut total = 0.0;
    for k in 0..3 {
        let tp = m[k][k] as f64;
        let predicted: f64 = (0..3).map(|r| m[r][k] as f64).sum();
        let actual: f64 = m[k].iter().map(|&x| x as f64).sum();
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / 3.0
}
