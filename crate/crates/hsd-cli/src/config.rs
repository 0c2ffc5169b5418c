//! Optional TOML config file with one section per command. Flags take
//! precedence over file values, which take precedence over built-in
//! defaults.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub prepare: PrepareSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PrepareSection {
    pub dev_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub stratify: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AugmentSection {
    pub top_p: Option<f64>,
    pub top_k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
    pub no_repeat_ngram: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainSection {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden_size: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub max_seq_len: Option<usize>,
    pub dropout: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub task_prefix: Option<String>,
    pub runs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
    }
}
