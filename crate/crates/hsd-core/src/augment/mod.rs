//! Training-set augmentation: boundary-word deletion and generative
//! continuation.
//!
//! Both techniques emit one new sample per input sample, merge the result
//! with the original corpus, and drop exact (text, label) duplicates, so the
//! original corpus is always a subset of the output.

mod generator;

pub use generator::{
    prompt_hash, CommandGenerator, RecordingGenerator, ReplayGenerator, ResponseGenerator,
};

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, Sample};
use crate::error::{Error, Result};
use crate::par;

/// Offensive-token list guarding the deletion technique.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: BTreeSet<String>,
    /// entry count of the file as loaded (before any exclusions)
    pub source_size: usize,
    /// entries removed by `apply_exclusions`
    pub removed_count: usize,
}

impl Lexicon {
    /// Load a one-token-per-line file; tokens are lowercased and
    /// deduplicated. An empty file is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read lexicon {}: {e}", path.display())))?;
        let words: BTreeSet<String> = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if words.is_empty() {
            return Err(Error::config(format!(
                "lexicon {} contains no tokens",
                path.display()
            )));
        }
        Ok(Lexicon {
            source_size: words.len(),
            removed_count: 0,
            words,
        })
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = words.into_iter().map(|w| w.to_lowercase()).collect();
        Lexicon {
            source_size: words.len(),
            removed_count: 0,
            words,
        }
    }

    /// Subtract an exclusion list (for example nationality and emotion
    /// words that should not count as offensive).
    pub fn apply_exclusions(&mut self, exclusions: &Lexicon) -> usize {
        let before = self.words.len();
        for w in &exclusions.words {
            self.words.remove(w);
        }
        let removed = before - self.words.len();
        self.removed_count += removed;
        removed
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Decoding hyperparameters forwarded to response generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct DecodingParams {
    pub top_p: f64,
    pub top_k: usize,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub no_repeat_ngram: usize,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            top_p: 0.7,
            top_k: 100,
            temperature: 0.8,
            max_new_tokens: 200,
            no_repeat_ngram: 3,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::config(format!(
                "top-p must be in (0,1], got {}",
                self.top_p
            )));
        }
        if self.top_k == 0 || self.max_new_tokens == 0 || self.no_repeat_ngram == 0 {
            return Err(Error::config(
                "top-k, max-new-tokens and no-repeat-ngram must be positive",
            ));
        }
        if self.temperature <= 0.0 {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMethod {
    BoundaryDeletion,
    Generative,
}

/// One augmented sample, traceable to its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationRecord {
    pub origin_id: String,
    pub method: AugmentMethod,
    pub text: String,
    /// label inherited unchanged from the origin sample
    pub label: String,
}

/// Counters reported by the augmentation passes.
#[derive(Debug, Clone, Default)]
pub struct AugmentStats {
    /// new samples produced before merge dedup
    pub new_samples: usize,
    /// samples skipped (generator failure or missing label)
    pub skipped: usize,
    /// exact (text, label) duplicates dropped during the merge
    pub duplicates_removed: usize,
    pub merged_size: usize,
    /// mean whitespace-token count appended per sample (generative only)
    pub mean_appended_tokens: f64,
    pub warnings: Vec<String>,
}

/// The per-sample deletion kernel: drop the first and last whitespace token
/// unless either is in the lexicon or the sample has two or fewer tokens, in
/// which case the sample is kept as is (`None`).
pub fn boundary_deleted_text(text: &str, lexicon: &Lexicon) -> Option<String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= 2 {
        return None;
    }
    let first = tokens.first().expect("non-empty");
    let last = tokens.last().expect("non-empty");
    if lexicon.contains(first) || lexicon.contains(last) {
        return None;
    }
    Some(tokens[1..tokens.len() - 1].join(" "))
}

/// Word-level deletion augmentation over a cleaned corpus. Samples whose
/// boundary tokens are offensive are emitted unchanged and therefore vanish
/// in the merge dedup.
pub fn delete_boundary(
    corpus: &LabeledCorpus,
    lexicon: &Lexicon,
) -> (LabeledCorpus, Vec<AugmentationRecord>, AugmentStats) {
    let subtask = corpus.task.subtask.clone();
    let variants = par::map_ordered(&corpus.samples, |s| {
        let label = s.label(&subtask)?.to_string();
        let text = boundary_deleted_text(&s.text, lexicon).unwrap_or_else(|| s.text.clone());
        Some(AugmentationRecord {
            origin_id: s.id.clone(),
            method: AugmentMethod::BoundaryDeletion,
            text,
            label,
        })
    });
    let mut stats = AugmentStats::default();
    let records: Vec<AugmentationRecord> = variants.into_iter().flatten().collect();
    stats.skipped = corpus.len() - records.len();
    stats.new_samples = records.len();
    let merged = merge_records(corpus, &records, "del", &mut stats);
    (merged, records, stats)
}

/// Ask the generator for a continuation of `prompt`, returning at most
/// `max-new-tokens` whitespace tokens of response text.
pub fn generate_continuation<G: ResponseGenerator + ?Sized>(
    prompt: &str,
    generator: &G,
    params: &DecodingParams,
) -> Result<String> {
    params.validate()?;
    if prompt.trim().is_empty() {
        return Err(Error::config("empty prompt"));
    }
    let response = generator.generate(prompt, params)?;
    let tokens: Vec<&str> = response.split_whitespace().collect();
    if tokens.len() > params.max_new_tokens {
        Ok(tokens[..params.max_new_tokens].join(" "))
    } else {
        Ok(response.trim().to_string())
    }
}

/// Generative augmentation: every sample's cleaned text is used as a prompt
/// and the response is appended, forming one new sample with the same label.
/// Generator failures skip the affected sample with a warning. Generator
/// calls may run concurrently; output order always matches input order.
pub fn augment_generative<G: ResponseGenerator + ?Sized>(
    corpus: &LabeledCorpus,
    generator: &G,
    params: &DecodingParams,
) -> Result<(LabeledCorpus, Vec<AugmentationRecord>, AugmentStats)> {
    params.validate()?;
    let subtask = corpus.task.subtask.clone();
    let outcomes = par::map_ordered(&corpus.samples, |s| {
        let Some(label) = s.label(&subtask).map(str::to_string) else {
            return Err(Error::Augmentation {
                origin_id: s.id.clone(),
                msg: format!("missing label for subtask {subtask:?}"),
            });
        };
        let response =
            generate_continuation(&s.text, generator, params).map_err(|e| Error::Augmentation {
                origin_id: s.id.clone(),
                msg: e.to_string(),
            })?;
        let text = if response.is_empty() {
            s.text.clone()
        } else {
            format!("{} {}", s.text, response)
        };
        Ok(AugmentationRecord {
            origin_id: s.id.clone(),
            method: AugmentMethod::Generative,
            text,
            label,
        })
    });

    let mut stats = AugmentStats::default();
    let mut records = Vec::with_capacity(corpus.len());
    let mut appended_tokens = 0usize;
    for (sample, outcome) in corpus.samples.iter().zip(outcomes) {
        match outcome {
            Ok(record) => {
                let origin_tokens = sample.text.split_whitespace().count();
                let new_tokens = record.text.split_whitespace().count();
                appended_tokens += new_tokens.saturating_sub(origin_tokens);
                records.push(record);
            }
            Err(e) => {
                stats.skipped += 1;
                stats.warnings.push(format!("skipped: {e}"));
            }
        }
    }
    stats.new_samples = records.len();
    stats.mean_appended_tokens = if records.is_empty() {
        0.0
    } else {
        appended_tokens as f64 / records.len() as f64
    };
    let merged = merge_records(corpus, &records, "gen", &mut stats);
    Ok((merged, records, stats))
}

/// Merge originals with augmented records, dropping exact (text, label)
/// duplicates and keeping first occurrences. Augmented ids get a suffix so
/// corpus ids stay unique.
fn merge_records(
    corpus: &LabeledCorpus,
    records: &[AugmentationRecord],
    suffix: &str,
    stats: &mut AugmentStats,
) -> LabeledCorpus {
    let subtask = &corpus.task.subtask;
    let mut merged = LabeledCorpus::new(corpus.task.clone(), corpus.split);
    let mut seen = std::collections::HashSet::new();
    for s in &corpus.samples {
        let key = (s.text.clone(), s.label(subtask).unwrap_or("").to_string());
        if seen.insert(key) {
            merged.samples.push(s.clone());
        } else {
            stats.duplicates_removed += 1;
        }
    }
    for r in records {
        let key = (r.text.clone(), r.label.clone());
        if !seen.insert(key) {
            stats.duplicates_removed += 1;
            continue;
        }
        let mut sample = Sample::new(format!("{}-{suffix}", r.origin_id), r.text.clone());
        sample.labels.insert(subtask.clone(), r.label.clone());
        merged.samples.push(sample);
    }
    stats.merged_size = merged.len();
    merged
}
