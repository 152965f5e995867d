//! wasm-bindgen surface for the browser demo. Every export takes and returns
//! JSON text; the `*_impl` functions hold the logic so they run natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use dermrl_core::fixtures;
use dermrl_core::grpo::{clipped_term, group_advantages, simulate, SimConfig};
use dermrl_core::mcq::{McqConfig, McqOption};
use dermrl_core::reward::{gran_reward_scaled, score_completion, ParseMode, RewardBreakdown, RewardConfig, TagSet};
use dermrl_core::taxonomy::{canonicalize, Malignancy};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreInput {
    pub completion: String,
    /// Ground-truth label; its root-to-node path comes from the fixture taxonomy.
    pub label: String,
    #[serde(default)]
    pub malignancy: Option<Malignancy>,
    #[serde(default)]
    pub options: Vec<String>,
    #[serde(default = "default_tags")]
    pub tags: String,
    #[serde(default)]
    pub mode: ParseMode,
}

fn default_tags() -> String {
    "rl".into()
}

#[derive(Debug, Serialize)]
pub struct ScoreOutput {
    pub ground_truth_path: Vec<String>,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvantageInput {
    pub rewards: Vec<f64>,
    /// Per-candidate π_new/π_old; defaults to 1 everywhere.
    #[serde(default)]
    pub ratios: Option<Vec<f64>>,
    #[serde(default = "default_eps")]
    pub clip_eps: f64,
}

fn default_eps() -> f64 {
    0.2
}

#[derive(Debug, Serialize)]
pub struct AdvantageOutput {
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
    pub clipped: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateInput {
    pub n_items: usize,
    pub steps: usize,
    pub group_size: usize,
    pub kl_coeff: f64,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SimulateInput {
    fn default() -> Self {
        let d = SimConfig::default().grpo;
        Self {
            n_items: 50,
            steps: 1000,
            group_size: d.group_size,
            kl_coeff: d.kl_coeff,
            learning_rate: d.learning_rate,
            temperature: d.temperature,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateOutput {
    pub initial_greedy_accuracy: f64,
    pub final_greedy_accuracy: f64,
    pub final_mean_kl: f64,
    pub mean_reward: Vec<f64>,
    pub greedy_accuracy: Vec<f64>,
    pub mean_kl: Vec<f64>,
}

pub fn labels_impl() -> String {
    let tree = fixtures::taxonomy();
    serde_json::to_string(&tree.labels().collect::<Vec<_>>()).expect("labels serialize")
}

pub fn score_impl(input: &str) -> Result<String, String> {
    let input: ScoreInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let tags = TagSet::preset(&input.tags).ok_or_else(|| format!("unknown tag preset `{}`", input.tags))?;
    let tree = fixtures::taxonomy();
    let mut truth = tree.path_of(&canonicalize(&input.label)).map_err(|e| e.to_string())?;
    if let Some(m) = input.malignancy {
        truth.malignancy = m;
    }
    let reward = RewardConfig::default();
    if input.options.len() > 26 {
        return Err("at most 26 options".into());
    }
    let options: Vec<McqOption> = input
        .options
        .iter()
        .zip('A'..='Z')
        .map(|(label, letter)| {
            let label = canonicalize(label);
            let gran_value = gran_reward_scaled(Some(&label), &truth, reward.gran_scale);
            McqOption { letter, label, gran_value }
        })
        .collect();
    let opts = (!options.is_empty()).then_some(options.as_slice());
    let breakdown = score_completion(&input.completion, &truth, opts, &tags, input.mode, &reward);
    let out = ScoreOutput { ground_truth_path: truth.path, breakdown };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn advantages_impl(input: &str) -> Result<String, String> {
    let input: AdvantageInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let advantages = group_advantages(&input.rewards).map_err(|e| e.to_string())?;
    let ratios = input.ratios.unwrap_or_else(|| vec![1.0; input.rewards.len()]);
    if ratios.len() != input.rewards.len() {
        return Err(format!("{} ratios for {} rewards", ratios.len(), input.rewards.len()));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(format!("ratio {r} must be positive"));
    }
    let n = input.rewards.len() as f64;
    let mean = input.rewards.iter().sum::<f64>() / n;
    let std = (input.rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let clipped = ratios
        .iter()
        .zip(&advantages)
        .map(|(r, a)| clipped_term(r.ln(), 0.0, *a, input.clip_eps))
        .collect();
    serde_json::to_string(&AdvantageOutput { mean, std, advantages, clipped }).map_err(|e| e.to_string())
}

pub fn simulate_impl(input: &str) -> Result<String, String> {
    let input: SimulateInput = if input.trim().is_empty() {
        SimulateInput::default()
    } else {
        serde_json::from_str(input).map_err(|e| e.to_string())?
    };
    if input.n_items == 0 || input.n_items > 500 {
        return Err("n_items must be in 1..=500".into());
    }
    if input.steps > 20_000 {
        return Err("steps must be at most 20000".into());
    }
    let items = fixtures::mcq_items(&fixtures::taxonomy(), input.n_items, &McqConfig::default(), input.seed)
        .map_err(|e| e.to_string())?;
    let mut cfg = SimConfig::default();
    cfg.grpo.steps = input.steps;
    cfg.grpo.group_size = input.group_size;
    cfg.grpo.kl_coeff = input.kl_coeff;
    cfg.grpo.learning_rate = input.learning_rate;
    cfg.grpo.temperature = input.temperature;
    cfg.grpo.seed = input.seed;
    let report = simulate(&items, cfg).map_err(|e| e.to_string())?;
    let out = SimulateOutput {
        initial_greedy_accuracy: report.initial_greedy_accuracy,
        final_greedy_accuracy: report.final_greedy_accuracy,
        final_mean_kl: report.final_mean_kl,
        mean_reward: report.rewards(),
        greedy_accuracy: report.steps.iter().map(|s| s.greedy_accuracy).collect(),
        mean_kl: report.steps.iter().map(|s| s.mean_kl).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// JSON array of every label in the bundled taxonomy.
#[wasm_bindgen]
pub fn labels() -> String {
    labels_impl()
}

/// Scores a completion against a taxonomy label.
#[wasm_bindgen]
pub fn score(input: &str) -> Result<String, JsError> {
    score_impl(input).map_err(|e| JsError::new(&e))
}

/// Group-relative advantages and clipped surrogate terms for one group.
#[wasm_bindgen]
pub fn advantages(input: &str) -> Result<String, JsError> {
    advantages_impl(input).map_err(|e| JsError::new(&e))
}

/// Runs the bandit simulator and returns per-step curves.
#[wasm_bindgen]
pub fn simulate_curve(input: &str) -> Result<String, JsError> {
    simulate_impl(input).map_err(|e| JsError::new(&e))
}
