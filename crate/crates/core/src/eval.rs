use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcq::{McqItem, Variant};
use crate::reward::{parse_completion_with_options, ParseMode, TagSet};
use crate::taxonomy::FORMAT_VERSION;

pub const LESION_CLASSES: [char; 3] = ['A', 'B', 'C'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub item_id: String,
    pub raw_completion: String,
    pub dataset_tag: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every dataset counts once.
    #[default]
    Unweighted,
    /// Datasets count by their number of predictions.
    BySize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub n: usize,
    pub correct: usize,
    pub invalid: usize,
    pub accuracy: f64,
    pub invalid_rate: f64,
    /// Only when every item of the dataset is a lesion-condition item.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub mode: ParseMode,
    pub weighting: Weighting,
    pub rows: Vec<DatasetRow>,
    pub average_accuracy: f64,
    pub average_invalid_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_macro_f1: Option<f64>,
}

/// The option letter a completion commits to. A written-out option label
/// counts as choosing that option.
pub fn extract_letter(completion: &str, item: &McqItem, tags: &TagSet, mode: ParseMode) -> Option<char> {
    let parsed = parse_completion_with_options(completion, tags, mode, Some(&item.options));
    parsed.option_letter.or_else(|| {
        let label = parsed.predicted_label?;
        item.options.iter().find(|o| o.label == label).map(|o| o.letter)
    })
}

fn resolve<'a>(items: &'a BTreeMap<String, McqItem>, id: &str) -> Result<&'a McqItem> {
    items.get(id).ok_or_else(|| Error::UnknownItem(id.to_string()))
}

pub fn index_items(items: impl IntoIterator<Item = McqItem>) -> BTreeMap<String, McqItem> {
    items.into_iter().map(|it| (it.id.clone(), it)).collect()
}

/// One dataset's row. `dataset` names the row; the records' own tags are
/// not consulted.
pub fn accuracy(
    dataset: &str,
    preds: &[PredictionRecord],
    items: &BTreeMap<String, McqItem>,
    tags: &TagSet,
    mode: ParseMode,
) -> Result<DatasetRow> {
    if preds.is_empty() {
        return Err(Error::InvalidInput(format!("no predictions for dataset `{dataset}`")));
    }
    let mut correct = 0;
    let mut invalid = 0;
    let mut lesion_pairs = Vec::new();
    let mut all_lesion = true;
    for p in preds {
        let item = resolve(items, &p.item_id)?;
        let letter = extract_letter(&p.raw_completion, item, tags, mode);
        match letter {
            None => invalid += 1,
            Some(l) if l == item.correct_letter => correct += 1,
            Some(_) => {}
        }
        if item.variant == Variant::LesionCondition {
            lesion_pairs.push((item.correct_letter, letter));
        } else {
            all_lesion = false;
        }
    }
    let n = preds.len();
    Ok(DatasetRow {
        dataset: dataset.to_string(),
        n,
        correct,
        invalid,
        accuracy: correct as f64 / n as f64,
        invalid_rate: invalid as f64 / n as f64,
        macro_f1: all_lesion.then(|| macro_f1(&lesion_pairs)),
    })
}

/// Unweighted mean of per-class F1 over A/B/C given `(truth, prediction)`
/// pairs. A class with no true or predicted instances scores 0; an
/// unextractable prediction is a miss for its true class.
pub fn macro_f1(pairs: &[(char, Option<char>)]) -> f64 {
    let mut sum = 0.0;
    for class in LESION_CLASSES {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for &(truth, pred) in pairs {
            match (truth == class, pred == Some(class)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    sum / LESION_CLASSES.len() as f64
}

/// Macro-F1 of predictions against lesion-condition items.
pub fn macro_f1_items(
    preds: &[PredictionRecord],
    items: &BTreeMap<String, McqItem>,
    tags: &TagSet,
    mode: ParseMode,
) -> Result<f64> {
    let mut pairs = Vec::with_capacity(preds.len());
    for p in preds {
        let item = resolve(items, &p.item_id)?;
        if item.variant != Variant::LesionCondition {
            return Err(Error::InvalidInput(format!(
                "item {} is not a lesion-condition item",
                item.id
            )));
        }
        pairs.push((item.correct_letter, extract_letter(&p.raw_completion, item, tags, mode)));
    }
    Ok(macro_f1(&pairs))
}

fn mean(values: impl Iterator<Item = (f64, usize)>, weighting: Weighting) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, n) in values {
        let w = match weighting {
            Weighting::Unweighted => 1.0,
            Weighting::BySize => n as f64,
        };
        num += w * v;
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

pub fn aggregate(rows: Vec<DatasetRow>, mode: ParseMode, weighting: Weighting) -> EvalReport {
    let average_accuracy = mean(rows.iter().map(|r| (r.accuracy, r.n)), weighting).unwrap_or(0.0);
    let average_invalid_rate = mean(rows.iter().map(|r| (r.invalid_rate, r.n)), weighting).unwrap_or(0.0);
    let average_macro_f1 = mean(rows.iter().filter_map(|r| Some((r.macro_f1?, r.n))), weighting);
    EvalReport {
        format_version: FORMAT_VERSION,
        mode,
        weighting,
        rows,
        average_accuracy,
        average_invalid_rate,
        average_macro_f1,
    }
}

/// Groups predictions by dataset tag, scores each group and averages.
pub fn evaluate(
    preds: &[PredictionRecord],
    items: &BTreeMap<String, McqItem>,
    tags: &TagSet,
    mode: ParseMode,
    weighting: Weighting,
) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("prediction file is empty".into()));
    }
    let mut groups: BTreeMap<&str, Vec<PredictionRecord>> = BTreeMap::new();
    for p in preds {
        groups.entry(p.dataset_tag.as_str()).or_default().push(p.clone());
    }
    let rows = groups
        .into_iter()
        .map(|(tag, ps)| accuracy(tag, &ps, items, tags, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(rows, mode, weighting))
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
        let f1 = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>8}  {:>8}  {:>8}", "dataset", "n", "accuracy", "invalid", "macro_f1");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>8.4}  {:>8.4}  {:>8}",
                r.dataset, r.n, r.accuracy, r.invalid_rate, f1(r.macro_f1)
            );
        }
        let n: usize = self.rows.iter().map(|r| r.n).sum();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>8.4}  {:>8.4}  {:>8}",
            "Avg.", n, self.average_accuracy, self.average_invalid_rate, f1(self.average_macro_f1)
        );
        out
    }
}
