//! Instruction templates for SFT records, RL rollouts and evaluation.

pub const SFT_TYPE1: &str = "You are a medical vision-language assistant specializing in dermatology.
Given the dermatology image, analyze the visual findings and provide a structured diagnosis following this format:

<thinking>Describe the key clinical features, visual observations, and the diagnostic rationale that support the diagnosis.</thinking>
<diagnosis>Provide the most likely and specific fine-grained diagnosis, and briefly classify the condition (benign or malignant) along with any relevant clinical taxonomy.</diagnosis>

Ensure your response is medically accurate, concise, and strictly follows the specified format.";

pub const SFT_TYPE23: &str = "You are a medical vision-language assistant specializing in dermatology.
Given the dermatology image, analyze the visual findings and provide a structured diagnostic reasoning following this format:

<thinking>
Begin by describing the characteristic clinical features and visual observations of the lesion.
Based on these features, propose the most likely diagnosis.
Then identify at least one plausible alternative diagnosis and describe its defining features.
Compare the observed lesion with these alternatives and explain step by step why the final diagnosis is more consistent with the findings.
Conclude the reasoning with the single condition that best matches the clinical presentation.
</thinking>

<diagnosis>
Provide only the single most likely and specific fine-grained diagnosis.
Also briefly classify the condition (benign or malignant) and indicate any relevant clinical taxonomy (e.g., subtype or disease family).
Do not include explanations, multiple options, or extra punctuation.
</diagnosis>

Ensure your response is medically accurate, concise, and strictly follows the specified format.";

pub const DISEASE_QUESTION: &str = "What type of abnormality is present in this image?";
pub const LESION_QUESTION: &str =
    "What type of lesion condition (benign, malignant or precancerous in situ) is present in this image?";

const PREAMBLE: &str =
    "You are a medical vision-language assistant specializing in dermatology. Given the dermatology image, answer: ";
const FORMAT_INTRO: &str = "Provide necessary reasoning and only answer the question in the following format:";
const THINKING_LINE: &str =
    "<thinking>Describe the key clinical features and visual observations that support your diagnosis.</thinking>";
const CLOSING: &str = "Ensure your response is medically accurate, concise, and strictly follows the specified format.";

/// Options inlined as `A: x B: y C: z`.
pub fn inline_options<'a>(options: impl IntoIterator<Item = (char, &'a str)>) -> String {
    options
        .into_iter()
        .map(|(l, label)| format!("{l}: {label}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// RL rollout prompt: asks for the most fine-grained option plus the lesion condition.
pub fn rl_prompt(question: &str) -> String {
    format!(
        "{PREAMBLE}{question}\n{FORMAT_INTRO}\n{THINKING_LINE}\n<final diagnosis>Provide only the single most likely option without reasoning. If multiple options are plausible, always choose the most fine-grained (i.e., most specific or detailed) option available among them. Also provide the lesion condition (benign, malignant or precancerous in situ). </final diagnosis>\n{CLOSING}"
    )
}

/// Evaluation prompt for disease diagnosis items; `letters` fills the
/// `(A/B/C/D)` hint.
pub fn diagnosis_eval_prompt(question: &str, letters: &[char]) -> String {
    let hint = letters.iter().map(char::to_string).collect::<Vec<_>>().join("/");
    format!(
        "{PREAMBLE}{question}\n{FORMAT_INTRO}\n{THINKING_LINE}\n<final diagnosis>Provide only the single most likely option ({hint}) without reasoning. If multiple options are plausible, always choose the most fine-grained (i.e., most specific or detailed) option available among them.  </final diagnosis>\n{CLOSING}"
    )
}

pub fn lesion_condition_prompt() -> String {
    format!(
        "You are a medical vision-language assistant specializing in dermatology.\nGiven the dermatology image, answer: {LESION_QUESTION}\nA: benign B: malignant C: precancerous in situ\n{FORMAT_INTRO}\n{THINKING_LINE}\n<final diagnosis>Only output one option: A, B, or C.</final diagnosis>\n{CLOSING}"
    )
}

/// Comparator request sent to the generation client for differential
/// reasoning. The anchor is the diagnosis the comparison must conclude on.
pub fn comparator_prompt(primary_rationale: &str, differential_rationale: &str, anchor: &str) -> String {
    format!(
        "You compare two dermatology diagnostic rules for the same lesion image.\n\
Primary rationale: {primary_rationale}\n\
Differential rationale: {differential_rationale}\n\
Anchor diagnosis: {anchor}\n\
Write a short step-by-step comparison of the discriminative features and conclude that the most likely condition corresponds to \"{anchor}\"."
    )
}

pub const ANCHOR_PREFIX: &str = "Anchor diagnosis: ";
