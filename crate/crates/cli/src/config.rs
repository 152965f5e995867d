use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use dermrl_core::reward::{RewardConfig, TagSet, DEFAULT_GRAN_SCALE};

/// Settings shared by every subcommand. Flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub taxonomy: Option<PathBuf>,
    pub ddx: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub p_local: f64,
    pub n_opts: usize,
    pub gran_scale: f64,
    pub tag_preset: String,
    pub seed: u64,
    pub log_level: String,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            taxonomy: None,
            ddx: None,
            generator: GeneratorConfig::default(),
            p_local: 0.5,
            n_opts: 4,
            gran_scale: DEFAULT_GRAN_SCALE,
            tag_preset: "rl".into(),
            seed: 0,
            log_level: "info".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Chat-completions URL. Unset means the offline mock generator.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-4o-mini".into(),
            api_key_env: "DERMRL_API_KEY".into(),
            timeout_secs: 60.0,
            retries: 2,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

impl ToolConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.gran_scale > 0.0 && self.gran_scale <= 1.0) {
            bail!("gran_scale must lie in (0, 1], got {}", self.gran_scale);
        }
        if self.n_opts < 2 {
            bail!("n_opts must be >= 2, got {}", self.n_opts);
        }
        if !(0.0..=1.0).contains(&self.p_local) {
            bail!("p_local must be in [0, 1], got {}", self.p_local);
        }
        if TagSet::preset(&self.tag_preset).is_none() {
            bail!("unknown tag preset `{}` (expected sft|rl)", self.tag_preset);
        }
        if !(self.generator.timeout_secs > 0.0) {
            bail!("generator.timeout_secs must be > 0");
        }
        Ok(())
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            gran_scale: self.gran_scale,
            ..RewardConfig::default()
        }
    }

    pub fn tags(&self) -> TagSet {
        TagSet::preset(&self.tag_preset).expect("validated preset")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: ToolConfig = toml::from_str("gran_scale = 1.0\n[generator]\nretries = 5\n").unwrap();
        assert_eq!(cfg.gran_scale, 1.0);
        assert_eq!(cfg.generator.retries, 5);
        assert_eq!(cfg.n_opts, 4);
        cfg.validate().unwrap();
    }

    #[test]
    fn bounds_are_checked() {
        let cfg = ToolConfig { gran_scale: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ToolConfig { n_opts: 1, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<ToolConfig>("bogus = 1").is_err());
    }
}
