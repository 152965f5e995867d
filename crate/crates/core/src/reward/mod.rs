//! Verifiable reward: `total = format + gran + malignancy`.
//!
//! * `format` is 1 when all four tag literals occur in the completion
//!   (optionally also in order), else 0.
//! * `gran` is `gran_scale * depth / L` when the predicted label sits at
//!   `depth` on the ground-truth path of length `L`, else 0. With the default
//!   scale of 0.75 the leaf scores 0.75.
//! * `malignancy` is 0.25 when the predicted lesion condition matches.

mod parse;

pub use parse::{
    parse_completion, parse_completion_with_options, ParseMode, ParsedCompletion, TagPresence,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcq::{McqItem, McqOption, Variant};
use crate::taxonomy::{Malignancy, TaxonomyAnnotation};

pub const DEFAULT_GRAN_SCALE: f64 = 0.75;
pub const MALIGNANCY_REWARD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSet {
    pub open_think: String,
    pub close_think: String,
    pub open_answer: String,
    pub close_answer: String,
}

impl TagSet {
    pub fn new(
        open_think: impl Into<String>,
        close_think: impl Into<String>,
        open_answer: impl Into<String>,
        close_answer: impl Into<String>,
    ) -> Result<Self> {
        let tags = Self {
            open_think: open_think.into(),
            close_think: close_think.into(),
            open_answer: open_answer.into(),
            close_answer: close_answer.into(),
        };
        tags.validate()?;
        Ok(tags)
    }

    /// Tags used by rendered SFT responses.
    pub fn sft() -> Self {
        Self::new("<thinking>", "</thinking>", "<diagnosis>", "</diagnosis>").expect("valid preset")
    }

    /// Tags requested by the RL and evaluation prompts.
    pub fn rl() -> Self {
        Self::new("<thinking>", "</thinking>", "<final diagnosis>", "</final diagnosis>")
            .expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sft" => Some(Self::sft()),
            "rl" => Some(Self::rl()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidTagSet("tags must be non-empty".into()));
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i] == all[j] {
                    return Err(Error::InvalidTagSet(format!("tag `{}` repeated", all[i])));
                }
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [&str; 4] {
        [
            &self.open_think,
            &self.close_think,
            &self.open_answer,
            &self.close_answer,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatCheck {
    #[default]
    Presence,
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub gran_scale: f64,
    pub format_check: FormatCheck,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            gran_scale: DEFAULT_GRAN_SCALE,
            format_check: FormatCheck::Presence,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gran_scale > 0.0 && self.gran_scale <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gran_scale must lie in (0, 1], got {}",
                self.gran_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub gran: f64,
    pub malignancy: f64,
    pub total: f64,
    pub parsed: ParsedCompletion,
}

pub fn format_reward(parsed: &ParsedCompletion, check: FormatCheck) -> f64 {
    let ok = match check {
        FormatCheck::Presence => parsed.tags_present.all(),
        FormatCheck::Ordered => parsed.tags_present.ordered,
    };
    if ok {
        1.0
    } else {
        0.0
    }
}

pub fn gran_reward(predicted: Option<&str>, truth: &TaxonomyAnnotation) -> f64 {
    gran_reward_scaled(predicted, truth, DEFAULT_GRAN_SCALE)
}

pub fn gran_reward_scaled(predicted: Option<&str>, truth: &TaxonomyAnnotation, scale: f64) -> f64 {
    let len = truth.len();
    match predicted.and_then(|p| truth.depth_of(p)) {
        // scale * depth first keeps 0.75 * 2 / 3 exactly 0.5.
        Some(depth) if len > 0 => scale * depth as f64 / len as f64,
        _ => 0.0,
    }
}

pub fn malignancy_reward(predicted: Option<Malignancy>, truth: Malignancy) -> f64 {
    if predicted == Some(truth) {
        MALIGNANCY_REWARD
    } else {
        0.0
    }
}

/// Scores one completion against a ground-truth annotation. `options`,
/// when given, lets an option letter resolve to its label.
pub fn score_completion(
    text: &str,
    truth: &TaxonomyAnnotation,
    options: Option<&[McqOption]>,
    tags: &TagSet,
    mode: ParseMode,
    config: &RewardConfig,
) -> RewardBreakdown {
    let parsed = parse_completion_with_options(text, tags, mode, options);
    breakdown(parsed, truth, config)
}

fn breakdown(parsed: ParsedCompletion, truth: &TaxonomyAnnotation, config: &RewardConfig) -> RewardBreakdown {
    let format = format_reward(&parsed, config.format_check);
    let gran = gran_reward_scaled(parsed.predicted_label.as_deref(), truth, config.gran_scale);
    let malignancy = malignancy_reward(parsed.predicted_malignancy, truth.malignancy);
    RewardBreakdown {
        format,
        gran,
        malignancy,
        total: format + gran + malignancy,
        parsed,
    }
}

pub fn total_reward(text: &str, item: &McqItem, tags: &TagSet, mode: ParseMode) -> RewardBreakdown {
    total_reward_with(text, item, tags, mode, &RewardConfig::default())
}

/// Scores a completion for an MCQ item. On lesion-condition items the
/// chosen letter is itself the malignancy prediction.
pub fn total_reward_with(
    text: &str,
    item: &McqItem,
    tags: &TagSet,
    mode: ParseMode,
    config: &RewardConfig,
) -> RewardBreakdown {
    let mut parsed = parse_completion_with_options(text, tags, mode, Some(&item.options));
    if item.variant == Variant::LesionCondition {
        if let Some(m) = parsed.option_letter.and_then(Malignancy::from_letter) {
            parsed.predicted_malignancy = Some(m);
        }
    }
    breakdown(parsed, &item.ground_truth, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ssm_path() -> TaxonomyAnnotation {
        TaxonomyAnnotation {
            path: vec![
                "lesion".into(),
                "melanoma".into(),
                "superficial spreading melanoma".into(),
            ],
            malignancy: Malignancy::Malignant,
        }
    }

    fn rl_score(text: &str) -> RewardBreakdown {
        score_completion(text, &ssm_path(), None, &TagSet::rl(), ParseMode::Strict, &RewardConfig::default())
    }

    #[test]
    fn tag_sets_validate() {
        assert!(TagSet::new("<a>", "<a>", "<b>", "</b>").is_err());
        assert!(TagSet::new("", "</a>", "<b>", "</b>").is_err());
        assert_eq!(TagSet::preset("SFT"), Some(TagSet::sft()));
        assert_eq!(TagSet::preset("rl"), Some(TagSet::rl()));
        assert_eq!(TagSet::preset("x"), None);
    }

    #[test]
    fn format_examples() {
        let tags = TagSet::rl();
        let ok = parse_completion("<thinking>a</thinking><final diagnosis>B</final diagnosis>", &tags, ParseMode::Strict);
        assert_eq!(format_reward(&ok, FormatCheck::Presence), 1.0);
        let missing = parse_completion("<thinking>a<final diagnosis>B</final diagnosis>", &tags, ParseMode::Strict);
        assert_eq!(format_reward(&missing, FormatCheck::Presence), 0.0);
        let reversed = parse_completion("<final diagnosis>B</final diagnosis><thinking>a</thinking>", &tags, ParseMode::Strict);
        assert_eq!(format_reward(&reversed, FormatCheck::Presence), 1.0);
        assert_eq!(format_reward(&reversed, FormatCheck::Ordered), 0.0);
        assert_eq!(format_reward(&ok, FormatCheck::Ordered), 1.0);
    }

    #[test]
    fn gran_examples() {
        let p = ssm_path();
        assert_eq!(gran_reward(Some("superficial spreading melanoma"), &p), 0.75);
        assert_eq!(gran_reward(Some("Melanoma"), &p), 0.5);
        assert_eq!(gran_reward(Some("lesion"), &p), 0.25);
        assert_eq!(gran_reward(Some("nevus"), &p), 0.0);
        assert_eq!(gran_reward(None, &p), 0.0);
        assert_eq!(gran_reward_scaled(Some("superficial spreading melanoma"), &p, 1.0), 1.0);
    }

    #[test]
    fn malignancy_examples() {
        assert_eq!(malignancy_reward(Some(Malignancy::Malignant), Malignancy::Malignant), 0.25);
        assert_eq!(malignancy_reward(Some(Malignancy::Benign), Malignancy::Malignant), 0.0);
        assert_eq!(malignancy_reward(None, Malignancy::Benign), 0.0);
    }

    #[test]
    fn total_examples() {
        let perfect = rl_score(
            "<thinking>asymmetric</thinking><final diagnosis>superficial spreading melanoma, malignant</final diagnosis>",
        );
        assert_eq!(perfect.total, 2.0);
        assert_eq!((perfect.format, perfect.gran, perfect.malignancy), (1.0, 0.75, 0.25));

        let untagged = score_completion(
            "<final diagnosis>superficial spreading melanoma, malignant</final diagnosis>",
            &ssm_path(),
            None,
            &TagSet::rl(),
            ParseMode::Strict,
            &RewardConfig::default(),
        );
        assert_eq!(untagged.total, 1.0);

        assert_eq!(rl_score("").total, 0.0);
    }

    #[test]
    fn config_bounds() {
        assert!(RewardConfig { gran_scale: 0.0, ..Default::default() }.validate().is_err());
        assert!(RewardConfig { gran_scale: 1.5, ..Default::default() }.validate().is_err());
        assert!(RewardConfig { gran_scale: 1.0, ..Default::default() }.validate().is_ok());
    }
}
