//! Multiple-choice item construction.
//!
//! Options for a standard item are the ground-truth label plus distractors
//! sampled from a dataset-local label set and from the global taxonomy.
//! Ancestors of the ground truth may be drawn; the ground truth stays the
//! unique correct answer because it is the deepest label on its own path.
//! Each option carries the granularity reward it would earn.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts;
use crate::reward::gran_reward;
use crate::taxonomy::{canonicalize, ddx_candidates, DdxGraph, Malignancy, TaxonomyAnnotation, TaxonomyTree, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    LesionCondition,
    Hierarchical,
    Ddx,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(Variant::Standard),
            "lesion_condition" | "lesion" => Ok(Variant::LesionCondition),
            "hierarchical" => Ok(Variant::Hierarchical),
            "ddx" => Ok(Variant::Ddx),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqOption {
    pub letter: char,
    pub label: String,
    pub gran_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub prompt: String,
    pub options: Vec<McqOption>,
    pub correct_letter: char,
    pub ground_truth: TaxonomyAnnotation,
    pub variant: Variant,
    /// Distractors added to fill a targeted variant beyond its primary source.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub padded_labels: Vec<String>,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

impl McqItem {
    pub fn correct_option(&self) -> Option<&McqOption> {
        self.options.iter().find(|o| o.letter == self.correct_letter)
    }

    pub fn option(&self, letter: char) -> Option<&McqOption> {
        self.options.iter().find(|o| o.letter == letter)
    }

    pub fn letters(&self) -> Vec<char> {
        self.options.iter().map(|o| o.letter).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    #[default]
    RlTraining,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McqConfig {
    pub n_opts: usize,
    /// Probability that a distractor is drawn from the local label set.
    pub p_local: f64,
    /// Force one strict ancestor of the ground truth into the options.
    pub inject_ancestor: bool,
    pub prompt_style: PromptStyle,
}

impl Default for McqConfig {
    fn default() -> Self {
        Self {
            n_opts: 4,
            p_local: 0.5,
            inject_ancestor: false,
            prompt_style: PromptStyle::RlTraining,
        }
    }
}

impl McqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_opts < 2 || self.n_opts > 26 {
            return Err(Error::InvalidConfig(format!("n_opts must be in 2..=26, got {}", self.n_opts)));
        }
        if !(0.0..=1.0).contains(&self.p_local) {
            return Err(Error::InvalidConfig(format!("p_local must be in [0, 1], got {}", self.p_local)));
        }
        Ok(())
    }
}

/// Identity of the case an item is built from.
#[derive(Debug, Clone, Copy)]
pub struct ItemSource<'a> {
    pub id: &'a str,
    pub image_ref: &'a str,
    pub ground_truth: &'a str,
}

pub fn build_mcq(
    source: ItemSource<'_>,
    local: Option<&BTreeSet<String>>,
    global: &TaxonomyTree,
    config: &McqConfig,
    seed: u64,
) -> Result<McqItem> {
    config.validate()?;
    let truth = global.path_of(source.ground_truth)?;
    let gt = truth.leaf().to_string();
    let available = global.len();
    if available < config.n_opts {
        return Err(Error::NotEnoughLabels {
            needed: config.n_opts,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![gt.clone()];

    if config.inject_ancestor && truth.len() > 1 {
        let ancestors = &truth.path[..truth.len() - 1];
        chosen.push(ancestors[rng.random_range(0..ancestors.len())].clone());
    }

    let mut global_pool: Vec<String> = global
        .labels()
        .filter(|l| !chosen.iter().any(|c| c == l))
        .map(str::to_string)
        .collect();
    let mut local_pool: Vec<String> = match local {
        Some(set) => set
            .iter()
            .map(|l| canonicalize(l))
            .filter(|l| global.contains(l) && !chosen.contains(l))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        None => global_pool.clone(),
    };

    while chosen.len() < config.n_opts {
        let want_local = rng.random::<f64>() < config.p_local;
        let (from, other) = if (want_local && !local_pool.is_empty()) || global_pool.is_empty() {
            (&mut local_pool, &mut global_pool)
        } else {
            (&mut global_pool, &mut local_pool)
        };
        if from.is_empty() {
            return Err(Error::NotEnoughLabels {
                needed: config.n_opts,
                available: chosen.len(),
            });
        }
        let pick = from.swap_remove(rng.random_range(0..from.len()));
        if let Some(pos) = other.iter().position(|l| *l == pick) {
            other.swap_remove(pos);
        }
        chosen.push(pick);
    }

    Ok(assemble(source.id, source.image_ref, chosen, truth, Variant::Standard, Vec::new(), config.prompt_style, &mut rng))
}

/// Replaces the options with the fixed benign / malignant / precancerous set.
pub fn build_lesion_condition(item: &McqItem) -> McqItem {
    let options = Malignancy::ALL
        .iter()
        .map(|m| McqOption {
            letter: m.letter(),
            label: m.as_str().to_string(),
            gran_value: gran_reward(Some(m.as_str()), &item.ground_truth),
        })
        .collect::<Vec<_>>();
    McqItem {
        format_version: FORMAT_VERSION,
        id: item.id.clone(),
        image_ref: item.image_ref.clone(),
        question: format!(
            "{} {}",
            prompts::LESION_QUESTION,
            prompts::inline_options(options.iter().map(|o| (o.letter, o.label.as_str())))
        ),
        prompt: prompts::lesion_condition_prompt(),
        options,
        correct_letter: item.ground_truth.malignancy.letter(),
        ground_truth: item.ground_truth.clone(),
        variant: Variant::LesionCondition,
        padded_labels: Vec::new(),
    }
}

/// Distractors are strict ancestors of the ground truth, padded with
/// off-path labels when there are fewer ancestors than slots.
pub fn build_hierarchical_variant(item: &McqItem, global: &TaxonomyTree, seed: u64) -> Result<McqItem> {
    let truth = &item.ground_truth;
    if truth.len() < 2 {
        return Err(Error::NoAncestors(truth.leaf().to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = item.options.len().max(2) - 1;
    let mut ancestors: Vec<String> = truth.path[..truth.len() - 1].to_vec();
    ancestors.shuffle(&mut rng);
    ancestors.truncate(need);

    let exclude: BTreeSet<&str> = truth.path.iter().map(String::as_str).collect();
    let pads = sample_pads(global, &exclude, need - ancestors.len(), &mut rng)?;

    let mut chosen = vec![truth.leaf().to_string()];
    chosen.extend(ancestors);
    chosen.extend(pads.iter().cloned());
    Ok(assemble(&item.id, &item.image_ref, chosen, truth.clone(), Variant::Hierarchical, pads, style_of(item), &mut rng))
}

/// Distractors are DDx neighbours of the ground truth (or of its parent
/// when it has none), restricted to taxonomy labels and padded with
/// off-path labels, then ancestors if the tree is too small.
pub fn build_ddx_variant(item: &McqItem, ddx: &DdxGraph, global: &TaxonomyTree, seed: u64) -> Result<McqItem> {
    let truth = &item.ground_truth;
    let gt = truth.leaf();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = item.options.len().max(2) - 1;

    let mut neighbors: Vec<String> = ddx_candidates(gt, ddx, global)
        .map(|set| {
            set.iter()
                .filter(|n| n.as_str() != gt && global.contains(n))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    neighbors.shuffle(&mut rng);
    neighbors.truncate(need);

    let mut exclude: BTreeSet<&str> = truth.path.iter().map(String::as_str).collect();
    exclude.extend(neighbors.iter().map(String::as_str));
    let want = need - neighbors.len();
    let off_path = global.labels().filter(|l| !exclude.contains(l)).count();
    let mut pads = sample_pads(global, &exclude, want.min(off_path), &mut rng)?;
    if pads.len() < want {
        // Small trees: ancestors fill what off-path labels cannot.
        let mut ancestors: Vec<String> = truth.path[..truth.len() - 1]
            .iter()
            .filter(|a| !neighbors.contains(a))
            .cloned()
            .collect();
        ancestors.shuffle(&mut rng);
        pads.extend(ancestors.into_iter().take(want - pads.len()));
    }

    let mut chosen = vec![gt.to_string()];
    chosen.extend(neighbors);
    chosen.extend(pads.iter().cloned());
    Ok(assemble(&item.id, &item.image_ref, chosen, truth.clone(), Variant::Ddx, pads, style_of(item), &mut rng))
}

fn style_of(item: &McqItem) -> PromptStyle {
    if item.prompt.contains("Also provide the lesion condition") {
        PromptStyle::RlTraining
    } else {
        PromptStyle::Evaluation
    }
}

fn sample_pads(
    global: &TaxonomyTree,
    exclude: &BTreeSet<&str>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut pool: Vec<&str> = global.labels().filter(|l| !exclude.contains(l)).collect();
    if pool.len() < count {
        return Err(Error::NotEnoughLabels {
            needed: count,
            available: pool.len(),
        });
    }
    pool.shuffle(rng);
    Ok(pool[..count].iter().map(|s| s.to_string()).collect())
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    id: &str,
    image_ref: &str,
    mut labels: Vec<String>,
    truth: TaxonomyAnnotation,
    variant: Variant,
    padded_labels: Vec<String>,
    style: PromptStyle,
    rng: &mut ChaCha8Rng,
) -> McqItem {
    labels.shuffle(rng);
    let options: Vec<McqOption> = labels
        .into_iter()
        .zip('A'..='Z')
        .map(|(label, letter)| McqOption {
            letter,
            gran_value: gran_reward(Some(&label), &truth),
            label,
        })
        .collect();
    let correct_letter = options
        .iter()
        .find(|o| o.label == truth.leaf())
        .map(|o| o.letter)
        .expect("ground truth is always among the options");
    let question = format!(
        "{} {}",
        prompts::DISEASE_QUESTION,
        prompts::inline_options(options.iter().map(|o| (o.letter, o.label.as_str())))
    );
    let prompt = match style {
        PromptStyle::RlTraining => prompts::rl_prompt(&question),
        PromptStyle::Evaluation => {
            let letters: Vec<char> = options.iter().map(|o| o.letter).collect();
            prompts::diagnosis_eval_prompt(&question, &letters)
        }
    };
    McqItem {
        format_version: FORMAT_VERSION,
        id: id.to_string(),
        image_ref: image_ref.to_string(),
        question,
        prompt,
        options,
        correct_letter,
        ground_truth: truth,
        variant,
        padded_labels,
    }
}

/// Checks the structural invariants every non-lesion item must satisfy:
/// distinct labels, a unique deepest on-path option, and `correct_letter`
/// pointing at it.
pub fn check_item_invariants(item: &McqItem) -> std::result::Result<(), String> {
    let labels: BTreeSet<&str> = item.options.iter().map(|o| o.label.as_str()).collect();
    if labels.len() != item.options.len() {
        return Err(format!("item {}: duplicate option labels", item.id));
    }
    if item.variant == Variant::LesionCondition {
        let expected: Vec<(char, &str)> = Malignancy::ALL.iter().map(|m| (m.letter(), m.as_str())).collect();
        let got: Vec<(char, &str)> = item.options.iter().map(|o| (o.letter, o.label.as_str())).collect();
        if got != expected {
            return Err(format!("item {}: lesion options {:?}", item.id, got));
        }
        return if item.correct_letter == item.ground_truth.malignancy.letter() {
            Ok(())
        } else {
            Err(format!("item {}: lesion correct letter mismatch", item.id))
        };
    }
    let on_path: Vec<(usize, char)> = item
        .options
        .iter()
        .filter_map(|o| item.ground_truth.depth_of(&o.label).map(|d| (d, o.letter)))
        .collect();
    let Some(&(max_depth, letter)) = on_path.iter().max_by_key(|(d, _)| *d) else {
        return Err(format!("item {}: no on-path option", item.id));
    };
    if on_path.iter().filter(|(d, _)| *d == max_depth).count() != 1 {
        return Err(format!("item {}: deepest on-path option not unique", item.id));
    }
    if letter != item.correct_letter {
        return Err(format!(
            "item {}: correct_letter {} but deepest on-path is {}",
            item.id, item.correct_letter, letter
        ));
    }
    Ok(())
}
