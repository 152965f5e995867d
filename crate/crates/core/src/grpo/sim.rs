use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::math::{grpo_objective, Candidate, CategoricalPolicy, GrpoConfig, GrpoGroup};
use crate::error::{Error, Result};
use crate::mcq::McqItem;
use crate::reward::{total_reward_with, ParseMode, RewardConfig, TagSet};
use crate::taxonomy::{Malignancy, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
    /// Probability that a synthesized completion loses its closing
    /// thinking tag.
    pub format_corruption: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grpo: GrpoConfig::default(),
            reward: RewardConfig::default(),
            format_corruption: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.grpo.validate()?;
        self.reward.validate()?;
        if !(0.0..=1.0).contains(&self.format_corruption) {
            return Err(Error::InvalidConfig(format!(
                "format_corruption must be in [0, 1], got {}",
                self.format_corruption
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_format: f64,
    pub mean_gran: f64,
    pub mean_malignancy: f64,
    /// Mean KL to the reference over the batch, before the update.
    pub mean_kl: f64,
    pub greedy_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub format_version: u32,
    pub config: SimConfig,
    pub item_count: usize,
    pub initial_greedy_accuracy: f64,
    pub final_greedy_accuracy: f64,
    pub final_mean_kl: f64,
    pub steps: Vec<StepRecord>,
}

impl TrainingReport {
    /// CSV with one row per step, for external plotting.
    pub fn plot_table(&self) -> String {
        let mut out = String::from("step,mean_reward,mean_format,mean_gran,mean_malignancy,mean_kl,greedy_accuracy\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.step, s.mean_reward, s.mean_format, s.mean_gran, s.mean_malignancy, s.mean_kl, s.greedy_accuracy
            ));
        }
        out
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mean_reward).collect()
    }

    /// Mean reward over consecutive non-overlapping windows.
    pub fn smoothed_rewards(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        self.rewards()
            .chunks(window)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Per-item option head and malignancy head, plus a frozen reference copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPolicy {
    pub item_ids: Vec<String>,
    pub current: Vec<CategoricalPolicy>,
    pub reference: Vec<CategoricalPolicy>,
}

impl SyntheticPolicy {
    pub fn uniform(items: &[McqItem]) -> Self {
        let current: Vec<CategoricalPolicy> = items
            .iter()
            .map(|it| CategoricalPolicy::uniform(&[it.options.len(), Malignancy::ALL.len()]))
            .collect();
        Self {
            item_ids: items.iter().map(|it| it.id.clone()).collect(),
            reference: current.clone(),
            current,
        }
    }

    /// Fraction of items whose most probable option is the correct one.
    /// Ties go to the earliest option.
    pub fn greedy_accuracy(&self, items: &[McqItem]) -> f64 {
        if items.is_empty() {
            return 0.0;
        }
        let hits = items
            .iter()
            .zip(&self.current)
            .filter(|(item, pol)| {
                let best = argmax(&pol.heads[0]);
                item.options.get(best).map(|o| o.letter) == Some(item.correct_letter)
            })
            .count();
        hits as f64 / items.len() as f64
    }

    pub fn mean_kl(&self, temperature: f64) -> Result<f64> {
        let mut total = 0.0;
        for (p, q) in self.current.iter().zip(&self.reference) {
            total += p.kl_to(q, temperature)?;
        }
        Ok(total / self.current.len().max(1) as f64)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// The text a candidate `(option, malignancy)` is rendered as before scoring.
pub fn synthesize_completion(item: &McqItem, option: usize, malignancy: Malignancy, corrupt: bool) -> String {
    let opt = &item.options[option];
    let close = if corrupt { "" } else { "</thinking>" };
    format!(
        "<thinking>Comparing the visible features with each listed option, option {} fits best.{close}\n\
<final diagnosis>{}: {}, {}</final diagnosis>",
        opt.letter, opt.letter, opt.label, malignancy
    )
}

pub struct Simulator<'a> {
    items: &'a [McqItem],
    config: SimConfig,
    tags: TagSet,
    policy: SyntheticPolicy,
    rng: ChaCha8Rng,
    step: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(items: &'a [McqItem], config: SimConfig) -> Result<Self> {
        config.validate()?;
        if items.is_empty() {
            return Err(Error::InvalidInput("simulation needs at least one item".into()));
        }
        if let Some(bad) = items.iter().find(|it| it.options.is_empty()) {
            return Err(Error::InvalidInput(format!("item {} has no options", bad.id)));
        }
        Ok(Self {
            items,
            config,
            tags: TagSet::rl(),
            policy: SyntheticPolicy::uniform(items),
            rng: ChaCha8Rng::seed_from_u64(config.grpo.seed),
            step: 0,
        })
    }

    pub fn policy(&self) -> &SyntheticPolicy {
        &self.policy
    }

    /// One sampling, scoring and ascent round over a batch of items.
    pub fn step(&mut self) -> Result<StepRecord> {
        let cfg = self.config.grpo;
        let t = cfg.temperature;
        let batch = cfg.batch_size.min(self.items.len());
        let mut picked = rand::seq::index::sample(&mut self.rng, self.items.len(), batch).into_vec();
        picked.sort_unstable();

        let (mut reward, mut format, mut gran, mut malig, mut kl) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &idx in &picked {
            let item = &self.items[idx];
            let policy = &self.policy.current[idx];
            let reference = &self.policy.reference[idx];
            let probs = policy.probs(t);
            let mut candidates = Vec::with_capacity(cfg.group_size);
            for _ in 0..cfg.group_size {
                let action = vec![sample_index(&probs[0], &mut self.rng), sample_index(&probs[1], &mut self.rng)];
                let corrupt = self.rng.random::<f64>() < self.config.format_corruption;
                let text = synthesize_completion(item, action[0], Malignancy::ALL[action[1]], corrupt);
                let scored = total_reward_with(&text, item, &self.tags, ParseMode::Strict, &self.config.reward);
                reward += scored.total;
                format += scored.format;
                gran += scored.gran;
                malig += scored.malignancy;
                candidates.push(Candidate {
                    logprob_old: policy.logprob(&action, t),
                    logprob_ref: reference.logprob(&action, t),
                    action,
                    reward: scored.total,
                });
            }
            let group = GrpoGroup::new(candidates)?;
            let objective = grpo_objective(&group, policy, reference, &cfg)?;
            kl += objective.kl;
            let policy = &mut self.policy.current[idx];
            for (head, g) in policy.heads.iter_mut().zip(&objective.grad) {
                for (z, gi) in head.iter_mut().zip(g) {
                    *z += cfg.learning_rate * gi;
                }
            }
        }

        let n = (batch * cfg.group_size) as f64;
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            mean_reward: reward / n,
            mean_format: format / n,
            mean_gran: gran / n,
            mean_malignancy: malig / n,
            mean_kl: kl / batch as f64,
            greedy_accuracy: self.policy.greedy_accuracy(self.items),
        })
    }

    pub fn run(mut self) -> Result<(TrainingReport, SyntheticPolicy)> {
        let initial = self.policy.greedy_accuracy(self.items);
        let mut steps = Vec::with_capacity(self.config.grpo.steps);
        for _ in 0..self.config.grpo.steps {
            steps.push(self.step()?);
        }
        let report = TrainingReport {
            format_version: FORMAT_VERSION,
            config: self.config,
            item_count: self.items.len(),
            initial_greedy_accuracy: initial,
            final_greedy_accuracy: self.policy.greedy_accuracy(self.items),
            final_mean_kl: self.policy.mean_kl(self.config.grpo.temperature)?,
            steps,
        };
        Ok((report, self.policy))
    }
}

pub fn simulate(items: &[McqItem], config: SimConfig) -> Result<TrainingReport> {
    Ok(Simulator::new(items, config)?.run()?.0)
}
