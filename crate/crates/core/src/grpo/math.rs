use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Groups whose reward spread falls below this get all-zero advantages.
pub const SIGMA_EPS: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;

/// `(r_j - mean) / std` with the population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite reward {bad}")));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < SIGMA_EPS {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)` with
/// `ratio = exp(logprob_new - logprob_old)`.
pub fn clipped_term(logprob_new: f64, logprob_old: f64, advantage: f64, eps: f64) -> f64 {
    let ratio = (logprob_new - logprob_old).exp();
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput(format!("{name} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidInput(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// `sum_i p_i ln(p_i / q_i)`, with `0 ln 0 = 0`.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::KlSupport(i));
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scaled.into_iter().map(|s| s - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coeff: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Items per step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 4,
            clip_eps: 0.2,
            kl_coeff: 0.01,
            temperature: 1.0,
            learning_rate: 0.1,
            steps: 5000,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.group_size < 2 {
            return bad(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be > 0, got {}", self.clip_eps));
        }
        if !(self.kl_coeff >= 0.0) {
            return bad(format!("kl_coeff must be >= 0, got {}", self.kl_coeff));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        // Zero is accepted so a run can be frozen.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

/// Independent categorical heads; a joint action picks one index per head
/// and its probability is the product over heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    pub heads: Vec<Vec<f64>>,
}

impl CategoricalPolicy {
    pub fn uniform(sizes: &[usize]) -> Self {
        Self {
            heads: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn probs(&self, temperature: f64) -> Vec<Vec<f64>> {
        self.heads.iter().map(|h| softmax(h, temperature)).collect()
    }

    pub fn logprob(&self, action: &[usize], temperature: f64) -> f64 {
        self.heads
            .iter()
            .zip(action)
            .map(|(h, &a)| log_softmax(h, temperature)[a])
            .sum()
    }

    /// Sum of per-head KL to `reference` (KL of the product distribution).
    pub fn kl_to(&self, reference: &CategoricalPolicy, temperature: f64) -> Result<f64> {
        let mut total = 0.0;
        for (p, q) in self.probs(temperature).iter().zip(reference.probs(temperature)) {
            total += categorical_kl(p, &q)?;
        }
        Ok(total)
    }

    fn same_shape(&self, other: &CategoricalPolicy) -> bool {
        self.heads.len() == other.heads.len()
            && self.heads.iter().zip(&other.heads).all(|(a, b)| a.len() == b.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: Vec<usize>,
    pub reward: f64,
    /// Log-probability under the sampling policy.
    pub logprob_old: f64,
    /// Log-probability under the reference policy; informational, the
    /// objective uses the exact KL between heads.
    #[serde(default)]
    pub logprob_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoGroup {
    pub candidates: Vec<Candidate>,
    pub advantages: Vec<f64>,
}

impl GrpoGroup {
    pub fn new(candidates: Vec<Candidate>) -> Result<Self> {
        let rewards: Vec<f64> = candidates.iter().map(|c| c.reward).collect();
        let advantages = group_advantages(&rewards)?;
        Ok(Self { candidates, advantages })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub value: f64,
    /// Mean clipped surrogate over the group.
    pub surrogate: f64,
    pub kl: f64,
    pub ratios: Vec<f64>,
    /// d value / d logits, same shape as the policy heads.
    pub grad: Vec<Vec<f64>>,
}

/// Mean clipped surrogate minus `kl_coeff * KL(policy || reference)`, with
/// its exact gradient w.r.t. the policy logits.
///
/// For `p = softmax(z / T)`: `d log p_k / d z_i = (1[i=k] - p_i) / T` and
/// `d KL / d z_i = p_i (ln(p_i / q_i) - KL) / T`. A clipped term contributes
/// gradient only when the unclipped branch attains the minimum.
pub fn grpo_objective(
    group: &GrpoGroup,
    policy: &CategoricalPolicy,
    reference: &CategoricalPolicy,
    config: &GrpoConfig,
) -> Result<Objective> {
    if !policy.same_shape(reference) {
        return Err(Error::InvalidInput("policy and reference shapes differ".into()));
    }
    if group.candidates.len() != group.advantages.len() || group.candidates.is_empty() {
        return Err(Error::InvalidInput("group advantages do not match candidates".into()));
    }
    let t = config.temperature;
    let eps = config.clip_eps;
    let k = group.candidates.len() as f64;
    let probs = policy.probs(t);
    let ref_probs = reference.probs(t);

    let mut grad: Vec<Vec<f64>> = policy.heads.iter().map(|h| vec![0.0; h.len()]).collect();
    let mut surrogate = 0.0;
    let mut ratios = Vec::with_capacity(group.candidates.len());
    for (cand, &adv) in group.candidates.iter().zip(&group.advantages) {
        if cand.action.len() != policy.heads.len()
            || cand.action.iter().zip(&policy.heads).any(|(&a, h)| a >= h.len())
        {
            return Err(Error::InvalidInput(format!("action {:?} out of range", cand.action)));
        }
        let logprob_new = policy.logprob(&cand.action, t);
        let ratio = (logprob_new - cand.logprob_old).exp();
        ratios.push(ratio);
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        surrogate += unclipped.min(clipped) / k;
        if unclipped <= clipped {
            let scale = adv * ratio / (k * t);
            for ((g, p), &a) in grad.iter_mut().zip(&probs).zip(&cand.action) {
                for (i, gi) in g.iter_mut().enumerate() {
                    let indicator = if i == a { 1.0 } else { 0.0 };
                    *gi += scale * (indicator - p[i]);
                }
            }
        }
    }

    let mut kl = 0.0;
    for (p, q) in probs.iter().zip(&ref_probs) {
        kl += categorical_kl(p, q)?;
    }
    if config.kl_coeff > 0.0 {
        for ((g, p), q) in grad.iter_mut().zip(&probs).zip(&ref_probs) {
            let head_kl = categorical_kl(p, q)?;
            for i in 0..g.len() {
                if p[i] > 0.0 {
                    g[i] -= config.kl_coeff * p[i] * ((p[i] / q[i]).ln() - head_kl) / t;
                }
            }
        }
    }

    Ok(Objective {
        value: surrogate - config.kl_coeff * kl,
        surrogate,
        kl,
        ratios,
        grad,
    })
}
