use serde::{Deserialize, Serialize};

use super::{Trajectory, TrajectoryKind};
use crate::prompts::{SFT_TYPE1, SFT_TYPE23};
use crate::taxonomy::TaxonomyAnnotation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub image_ref: String,
    pub prompt: String,
    pub response: String,
}

const CONCLUSION: &str = "Therefore, the most likely condition corresponds to";

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// `"Melanoma is a subtype of a, and b, and is generally classified as
/// malignant."`; the subtype clause is dropped for roots.
pub fn hierarchy_sentence(annotation: &TaxonomyAnnotation) -> String {
    let leaf = capitalize(annotation.leaf());
    let ancestors: Vec<&str> = annotation.ancestors_nearest_first().collect();
    if ancestors.is_empty() {
        format!("{leaf} is generally classified as {}.", annotation.malignancy)
    } else {
        format!(
            "{leaf} is a subtype of {}, and is generally classified as {}.",
            ancestors.join(", and "),
            annotation.malignancy
        )
    }
}

pub fn render_sft(traj: &Trajectory) -> SftRecord {
    let sentence = hierarchy_sentence(&traj.annotation);
    let d_f = &traj.final_diagnosis;
    let (prompt, response) = match traj.kind {
        TrajectoryKind::Type1 => (
            SFT_TYPE1,
            format!(
                "<thinking>{}</thinking>\n<diagnosis>{d_f}, {sentence}</diagnosis>",
                traj.primary_rationale.trim()
            ),
        ),
        TrajectoryKind::Type2 | TrajectoryKind::Type3 => {
            let d_p = &traj.primary_diagnosis;
            let d_d = traj.differential_diagnosis.as_deref().unwrap_or_default();
            let r_d = traj.differential_rationale.as_deref().unwrap_or_default().trim();
            let comparison = traj.comparison.as_deref().unwrap_or_default().trim();
            let mut thinking = format!(
                "Based on the rule: {} We can give a primary diagnosis that {d_p}. \
Considering the differential diagnosis for {d_p}, namely {d_d}, we compare against the diagnostic rule for {d_d}: {r_d}\n{comparison}",
                traj.primary_rationale.trim()
            );
            if !comparison.contains(CONCLUSION) {
                thinking.push_str(&format!(" {CONCLUSION} \"{d_f}\"."));
            }
            (
                SFT_TYPE23,
                format!("<thinking>\n{thinking}\n</thinking>\n<diagnosis>{d_f}. {sentence}</diagnosis>"),
            )
        }
    };
    SftRecord {
        image_ref: traj.image_ref.clone(),
        prompt: prompt.to_string(),
        response,
    }
}
