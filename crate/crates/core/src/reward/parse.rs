use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::TagSet;
use crate::mcq::McqOption;
use crate::taxonomy::{canonicalize, Malignancy};

/// A capital letter standing alone, followed by `:`, `.`, `,`, `)`,
/// whitespace or end of text.
static LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-Z])(?:[:.,)]|\s|$)").expect("letter regex"));

static MALIGNANCY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(precancerous\s+in\s+situ|precancerous|malignant|benign)\b").expect("malignancy regex")
});

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Only the text inside the answer tags is read.
    #[default]
    Strict,
    /// Falls back to the whole completion when the answer block yields nothing.
    Lenient,
}

impl std::str::FromStr for ParseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(ParseMode::Strict),
            "lenient" => Ok(ParseMode::Lenient),
            other => Err(format!("unknown parse mode `{other}` (expected strict|lenient)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagPresence {
    pub open_think: bool,
    pub close_think: bool,
    pub open_answer: bool,
    pub close_answer: bool,
    /// All four present and the thinking block closes before the answer
    /// block opens.
    pub ordered: bool,
}

impl TagPresence {
    pub fn all(&self) -> bool {
        self.open_think && self.close_think && self.open_answer && self.close_answer
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCompletion {
    pub thinking: Option<String>,
    pub answer_text: Option<String>,
    pub option_letter: Option<char>,
    pub predicted_label: Option<String>,
    pub predicted_malignancy: Option<Malignancy>,
    pub tags_present: TagPresence,
}

pub fn parse_completion(text: &str, tags: &TagSet, mode: ParseMode) -> ParsedCompletion {
    parse_completion_with_options(text, tags, mode, None)
}

/// Parses a completion. When `options` is given, letters are restricted to
/// the option letters and an option label written out in the answer is
/// resolved to that option.
pub fn parse_completion_with_options(
    text: &str,
    tags: &TagSet,
    mode: ParseMode,
    options: Option<&[McqOption]>,
) -> ParsedCompletion {
    let tags_present = tag_presence(text, tags);
    let lenient = mode == ParseMode::Lenient;
    let thinking = extract_block(text, &tags.open_think, &tags.close_think, lenient);
    let answer = extract_block(text, &tags.open_answer, &tags.close_answer, lenient);

    let valid = |c: char| options.is_none_or(|opts| opts.iter().any(|o| o.letter == c));

    let mut option_letter = answer.and_then(|a| letters(a).find(|c| valid(*c)));
    if option_letter.is_none() && lenient {
        option_letter = letters(text).filter(|c| valid(*c)).last();
    }

    let predicted_label = match (option_letter, options) {
        (Some(l), Some(opts)) => opts.iter().find(|o| o.letter == l).map(|o| o.label.clone()),
        (None, Some(opts)) => answer
            .and_then(|a| match_option_label(a, opts))
            .or_else(|| lenient.then(|| match_option_label(text, opts)).flatten()),
        (_, None) => answer
            .and_then(leading_label)
            .or_else(|| lenient.then(|| leading_label(text)).flatten()),
    };

    let mut predicted_malignancy = answer.and_then(|a| malignancy_mentions(a).last());
    if predicted_malignancy.is_none() && lenient {
        predicted_malignancy = malignancy_mentions(text).last();
    }

    ParsedCompletion {
        thinking: thinking.map(|s| s.trim().to_string()),
        answer_text: answer.map(|s| s.trim().to_string()),
        option_letter,
        predicted_label,
        predicted_malignancy,
        tags_present,
    }
}

fn tag_presence(text: &str, tags: &TagSet) -> TagPresence {
    let pos = |t: &str| text.find(t);
    let (ot, ct, oa, ca) = (
        pos(&tags.open_think),
        pos(&tags.close_think),
        pos(&tags.open_answer),
        pos(&tags.close_answer),
    );
    let ordered = matches!((ot, ct, oa, ca), (Some(a), Some(b), Some(c), Some(d)) if a < b && b <= c && c < d);
    TagPresence {
        open_think: ot.is_some(),
        close_think: ct.is_some(),
        open_answer: oa.is_some(),
        close_answer: ca.is_some(),
        ordered,
    }
}

fn extract_block<'a>(text: &'a str, open: &str, close: &str, allow_unclosed: bool) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let rest = &text[start..];
    match rest.find(close) {
        Some(end) => Some(&rest[..end]),
        None if allow_unclosed => Some(rest),
        None => None,
    }
}

fn letters(text: &str) -> impl Iterator<Item = char> + '_ {
    LETTER
        .captures_iter(text)
        .filter_map(|c| c.get(1)?.as_str().chars().next())
}

/// Longest option label occurring in `text` on word boundaries.
fn match_option_label(text: &str, options: &[McqOption]) -> Option<String> {
    let hay = format!(" {} ", canonicalize(&text.replace(|c: char| !c.is_alphanumeric() && c != '-', " ")));
    options
        .iter()
        .filter(|o| !o.label.is_empty())
        .filter(|o| {
            let needle = canonicalize(&o.label.replace(|c: char| !c.is_alphanumeric() && c != '-', " "));
            hay.contains(&format!(" {needle} "))
        })
        .max_by_key(|o| o.label.len())
        .map(|o| o.label.clone())
}

/// The answer up to its first `,` `.` `;` or newline, canonicalized.
fn leading_label(answer: &str) -> Option<String> {
    let head = answer
        .trim()
        .split([',', '.', ';', '\n'])
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| c == '"' || c == '\'' || c.is_whitespace());
    let label = canonicalize(head);
    (!label.is_empty()).then_some(label)
}

fn malignancy_mentions(text: &str) -> impl Iterator<Item = Malignancy> + '_ {
    MALIGNANCY.captures_iter(text).filter_map(move |c| {
        let m = c.get(1)?;
        let before = text[..m.start()].to_ascii_lowercase();
        if before.ends_with("non-") || before.ends_with("non ") {
            return None;
        }
        let word = canonicalize(m.as_str());
        Some(if word.starts_with("precancerous") {
            Malignancy::PrecancerousInSitu
        } else if word == "malignant" {
            Malignancy::Malignant
        } else {
            Malignancy::Benign
        })
    })
}
