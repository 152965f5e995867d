use thiserror::Error;

use crate::prompts::ANCHOR_PREFIX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("server returned status {status} after {attempts} attempt(s)")]
    Status { status: u16, attempts: u32 },
    #[error("malformed response body after {attempts} attempt(s): {message}")]
    MalformedBody { message: String, attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("{0}")]
    Other(String),
}

/// Text-completion backend used for the differential comparison step.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, GenerationError>;
}

impl<F> TextGenerator for F
where
    F: Fn(&str) -> Result<String, GenerationError> + Send + Sync,
{
    fn generate(&self, prompt: &str) -> Result<String, GenerationError> {
        self(prompt)
    }
}

/// Deterministic offline generator: a pure function of the prompt that
/// names every diagnosis label found in it.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl MockGenerator {
    /// Labels from `... diagnosis: <label>` lines, anchor first.
    fn labels(prompt: &str) -> (Option<String>, Vec<String>) {
        let mut anchor = None;
        let mut others = Vec::new();
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix(ANCHOR_PREFIX) {
                anchor = Some(rest.trim().to_string());
            } else if let Some((head, rest)) = line.split_once(':') {
                if head.to_ascii_lowercase().ends_with("diagnosis") && !rest.trim().is_empty() {
                    others.push(rest.trim().to_string());
                }
            }
        }
        (anchor, others)
    }
}

impl TextGenerator for MockGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GenerationError> {
        let (anchor, others) = Self::labels(prompt);
        let mut out = String::new();
        if !others.is_empty() {
            out.push_str(&format!("Diagnoses under consideration: {}. ", others.join("; ")));
        }
        match anchor {
            Some(anchor) => out.push_str(&format!(
                "The primary and differential rules were compared feature by feature. \
The described morphology, distribution and colour are most consistent with {anchor}, \
while the defining features of the alternative are not observed. \
Therefore, the most likely condition corresponds to \"{anchor}\"."
            )),
            None => out.push_str("No diagnosis label was found in the request."),
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::comparator_prompt;

    #[test]
    fn mock_embeds_anchor_and_is_pure() {
        let p = comparator_prompt("rule a", "rule b", "melanoma");
        let a = MockGenerator.generate(&p).unwrap();
        assert!(a.contains("\"melanoma\""));
        assert_eq!(a, MockGenerator.generate(&p).unwrap());
    }

    #[test]
    fn mock_without_labels() {
        let out = MockGenerator.generate("hello").unwrap();
        assert_eq!(out, "No diagnosis label was found in the request.");
    }

    #[test]
    fn closures_are_generators() {
        let fixed = |_: &str| Ok::<_, GenerationError>("FIXED".to_string());
        assert_eq!(fixed.generate("x").unwrap(), "FIXED");
    }
}
