//! Bundled synthetic data and random generators for tests, demos and the
//! simulator. Nothing here is clinical ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::DiagnosticCase;
use crate::error::Result;
use crate::mcq::{build_mcq, ItemSource, McqConfig, McqItem};
use crate::taxonomy::{CaseIndex, DdxGraph, Malignancy, NodeRecord, TaxonomyDocument, TaxonomyTree, FORMAT_VERSION};

pub const TAXONOMY_JSON: &str = include_str!("../fixtures/taxonomy.json");
pub const DDX_JSON: &str = include_str!("../fixtures/ddx.json");

pub fn taxonomy() -> TaxonomyTree {
    TaxonomyTree::from_json_str(TAXONOMY_JSON).expect("bundled taxonomy is valid")
}

pub fn ddx() -> DdxGraph {
    DdxGraph::from_json_str(DDX_JSON).expect("bundled ddx graph is valid")
}

const FEATURES: [&str; 8] = [
    "an irregular pigment network",
    "symmetric brown globules",
    "arborizing vessels",
    "a stuck-on waxy surface",
    "central white scar-like area",
    "well-demarcated scaly plaque",
    "red-purple lacunae",
    "a blue-white veil",
];

/// `n` cases with diagnoses drawn uniformly from the tree's labels.
pub fn cases(tree: &TaxonomyTree, n: usize, seed: u64) -> Vec<DiagnosticCase> {
    let labels: Vec<&str> = tree.labels().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let diagnosis = labels[rng.random_range(0..labels.len())];
            let a = FEATURES[rng.random_range(0..FEATURES.len())];
            let b = FEATURES[rng.random_range(0..FEATURES.len())];
            DiagnosticCase {
                id: format!("case-{i:04}"),
                image_ref: format!("img/case-{i:04}.jpg"),
                rationale: format!("The image shows {a} together with {b}, which supports {diagnosis}."),
                diagnosis: diagnosis.to_string(),
            }
        })
        .collect()
}

/// `n` standard items whose ground truths are drawn uniformly from the tree.
/// The local pool for each item is the subtree of its root.
pub fn mcq_items(tree: &TaxonomyTree, n: usize, config: &McqConfig, seed: u64) -> Result<Vec<McqItem>> {
    let labels: Vec<&str> = tree.labels().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gt = labels[rng.random_range(0..labels.len())];
            let id = format!("item-{i:04}");
            let image_ref = format!("img/{id}.jpg");
            let local = tree.same_root(gt);
            build_mcq(
                ItemSource { id: &id, image_ref: &image_ref, ground_truth: gt },
                Some(&local),
                tree,
                config,
                rng.random(),
            )
        })
        .collect()
}

/// A random forest of at most `max_nodes` nodes (at least one) and depth at
/// most `max_depth`, labelled `n0`, `n1`, ...
pub fn random_taxonomy<R: Rng>(rng: &mut R, max_nodes: usize, max_depth: usize) -> TaxonomyTree {
    let n = rng.random_range(1..=max_nodes.max(1));
    let mut depth = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let eligible: Vec<usize> = (0..i).filter(|&j| depth[j] < max_depth).collect();
        let parent = if eligible.is_empty() || rng.random_bool(0.2) {
            None
        } else {
            Some(eligible[rng.random_range(0..eligible.len())])
        };
        depth.push(parent.map_or(1, |p| depth[p] + 1));
        nodes.push(NodeRecord {
            label: format!("n{i}"),
            parent: parent.map(|p| format!("n{p}")),
            malignancy: Malignancy::ALL[rng.random_range(0..3)].as_str().to_string(),
        });
    }
    TaxonomyTree::from_document(TaxonomyDocument { format_version: FORMAT_VERSION, nodes })
        .expect("generated taxonomy is valid")
}

/// Each unordered pair of labels becomes an edge with probability `p`.
/// Self-loops are offered too, so callers see them dropped.
pub fn random_ddx<R: Rng>(rng: &mut R, tree: &TaxonomyTree, p: f64) -> DdxGraph {
    let labels: Vec<&str> = tree.labels().collect();
    let mut g = DdxGraph::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i..] {
            if rng.random_bool(p) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// Gives each label zero to two cases with probability `p` of having any.
pub fn random_case_index<R: Rng>(rng: &mut R, tree: &TaxonomyTree, p: f64) -> CaseIndex {
    let mut idx = CaseIndex::new();
    let mut labels: Vec<&str> = tree.labels().collect();
    labels.shuffle(rng);
    for (i, l) in labels.iter().enumerate() {
        if rng.random_bool(p) {
            for k in 0..rng.random_range(1..=2) {
                idx.insert(l, format!("c{i}-{k}"));
            }
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data_is_consistent() {
        let tree = taxonomy();
        let g = ddx();
        assert!(tree.len() >= 40);
        assert!(g.unresolved_labels(&tree).is_empty());
        assert!(g.is_symmetric());
        assert!(g.dropped_self_loops().is_empty());
    }

    #[test]
    fn random_taxonomy_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t = random_taxonomy(&mut rng, 50, 6);
            assert!(t.len() <= 50 && !t.is_empty());
            assert!(t.labels().all(|l| t.depth(l).unwrap() <= 6));
        }
    }

    #[test]
    fn items_are_deterministic() {
        let tree = taxonomy();
        let a = mcq_items(&tree, 20, &McqConfig::default(), 9).unwrap();
        let b = mcq_items(&tree, 20, &McqConfig::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
