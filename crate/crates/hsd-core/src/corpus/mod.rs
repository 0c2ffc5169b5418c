//! Datasets, subtasks and labeled corpora.
//!
//! A corpus is an ordered list of samples tied to one active subtask
//! ([`TaskSpec`]). Samples may carry labels for sibling subtasks of the same
//! dataset; operations that care about labels act on the active subtask.

mod descriptor;
mod loader;

pub use descriptor::{ColumnMap, DatasetDescriptor, SubtaskDescriptor};
pub use loader::{load_dataset, load_snapshot, write_snapshot, LoadReport};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six datasets the toolkit knows out of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Olid2019,
    Hasoc2020,
    Hasoc2021,
    Hateval2019,
    Hso,
    Trac2,
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DatasetId::Olid2019 => "olid2019",
            DatasetId::Hasoc2020 => "hasoc2020",
            DatasetId::Hasoc2021 => "hasoc2021",
            DatasetId::Hateval2019 => "hateval2019",
            DatasetId::Hso => "hso",
            DatasetId::Trac2 => "trac2",
        };
        f.write_str(s)
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "olid2019" => Ok(DatasetId::Olid2019),
            "hasoc2020" => Ok(DatasetId::Hasoc2020),
            "hasoc2021" => Ok(DatasetId::Hasoc2021),
            "hateval2019" => Ok(DatasetId::Hateval2019),
            "hso" => Ok(DatasetId::Hso),
            "trac2" => Ok(DatasetId::Trac2),
            other => Err(Error::config(format!("unknown dataset id {other:?}"))),
        }
    }
}

/// One sample: opaque id, raw text, and per-subtask labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    /// subtask id -> canonical label
    pub labels: BTreeMap<String, String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, subtask: &str, label: &str) -> Self {
        self.labels.insert(subtask.to_string(), label.to_string());
        self
    }

    pub fn label(&self, subtask: &str) -> Option<&str> {
        self.labels.get(subtask).map(String::as_str)
    }
}

/// One subtask of one dataset, with its canonical label space in a fixed
/// order (the order drives label-token assignment downstream).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub dataset: DatasetId,
    pub subtask: String,
    pub label_space: Vec<String>,
    /// split name -> declared sample count; mismatches warn, never fail
    #[serde(default)]
    pub declared_split_sizes: BTreeMap<String, usize>,
}

impl TaskSpec {
    pub fn new(dataset: DatasetId, subtask: impl Into<String>, labels: &[&str]) -> Self {
        TaskSpec {
            dataset,
            subtask: subtask.into(),
            label_space: labels.iter().map(|s| s.to_string()).collect(),
            declared_split_sizes: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_space.len() < 2 {
            return Err(Error::config(format!(
                "subtask {} needs at least 2 labels, got {}",
                self.subtask,
                self.label_space.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &self.label_space {
            if !seen.insert(l) {
                return Err(Error::config(format!(
                    "duplicate label {l:?} in label space of subtask {}",
                    self.subtask
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Train => f.write_str("train"),
            SplitTag::Dev => f.write_str("dev"),
            SplitTag::Test => f.write_str("test"),
        }
    }
}

/// Ordered samples plus the subtask they are labeled for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub task: TaskSpec,
    pub samples: Vec<Sample>,
    pub split: SplitTag,
}

/// Counts reported by [`LabeledCorpus::drop_invalid`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropReport {
    pub missing_label: usize,
    pub duplicates: usize,
}

impl LabeledCorpus {
    pub fn new(task: TaskSpec, split: SplitTag) -> Self {
        LabeledCorpus {
            task,
            samples: Vec::new(),
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Label of a sample for the active subtask.
    pub fn active_label<'a>(&self, sample: &'a Sample) -> Option<&'a str> {
        sample.label(&self.task.subtask)
    }

    /// Remove rows whose label for `subtask` is missing or empty, then drop
    /// exact duplicate (text, label) rows keeping the first occurrence.
    /// Always succeeds; the result may be empty.
    pub fn drop_invalid(&self, subtask: &str) -> Result<(LabeledCorpus, DropReport)> {
        if !self.task.subtask.eq(subtask)
            && !self.samples.iter().any(|s| s.labels.contains_key(subtask))
        {
            return Err(Error::config(format!(
                "subtask {subtask:?} not declared on this corpus"
            )));
        }
        let mut report = DropReport::default();
        let mut seen = std::collections::HashSet::new();
        let mut kept = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let label = match s.label(subtask) {
                Some(l) if !l.trim().is_empty() => l.to_string(),
                _ => {
                    report.missing_label += 1;
                    continue;
                }
            };
            if !seen.insert((s.text.clone(), label)) {
                report.duplicates += 1;
                continue;
            }
            kept.push(s.clone());
        }
        Ok((
            LabeledCorpus {
                task: self.task.clone(),
                samples: kept,
                split: self.split,
            },
            report,
        ))
    }

    /// Seeded uniform split into (train, dev). Dev size is
    /// `round(fraction * n)`; relative sample order is preserved on both
    /// sides. Deterministic in (corpus order, fraction, seed).
    pub fn split_dev(&self, fraction: f64, seed: u64) -> Result<(LabeledCorpus, LabeledCorpus)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::config(format!(
                "dev fraction must be in (0, 1), got {fraction}"
            )));
        }
        if self.samples.len() < 2 {
            return Err(Error::config(format!(
                "need at least 2 samples to split, got {}",
                self.samples.len()
            )));
        }
        let n = self.samples.len();
        let dev_n = (fraction * n as f64).round() as usize;
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let dev_set: std::collections::HashSet<usize> = indices[..dev_n].iter().copied().collect();
        self.partition(&dev_set)
    }

    /// Opt-in stratified variant of [`split_dev`](Self::split_dev): per-class
    /// dev quotas via largest remainder so the total still equals
    /// `round(fraction * n)`.
    pub fn split_dev_stratified(
        &self,
        fraction: f64,
        seed: u64,
    ) -> Result<(LabeledCorpus, LabeledCorpus)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::config(format!(
                "dev fraction must be in (0, 1), got {fraction}"
            )));
        }
        if self.samples.len() < 2 {
            return Err(Error::config(format!(
                "need at least 2 samples to split, got {}",
                self.samples.len()
            )));
        }
        let n = self.samples.len();
        let target = (fraction * n as f64).round() as usize;

        // Group sample indices by label, in label-space order.
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for label in &self.task.label_space {
            groups.push((label.clone(), Vec::new()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            let label = self.active_label(s).unwrap_or_default().to_string();
            match groups.iter_mut().find(|(l, _)| *l == label) {
                Some((_, v)) => v.push(i),
                None => groups.push((label, vec![i])),
            }
        }

        let mut quotas: Vec<usize> = groups
            .iter()
            .map(|(_, idxs)| (fraction * idxs.len() as f64).floor() as usize)
            .collect();
        let mut remainders: Vec<(usize, f64)> = groups
            .iter()
            .enumerate()
            .map(|(gi, (_, idxs))| {
                let ideal = fraction * idxs.len() as f64;
                (gi, ideal - ideal.floor())
            })
            .collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let mut assigned: usize = quotas.iter().sum();
        for (gi, _) in remainders {
            if assigned >= target {
                break;
            }
            if quotas[gi] < groups[gi].1.len() {
                quotas[gi] += 1;
                assigned += 1;
            }
        }

        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut dev_set = std::collections::HashSet::new();
        for ((_, mut idxs), quota) in groups.into_iter().zip(quotas) {
            idxs.shuffle(&mut rng);
            for i in idxs.into_iter().take(quota) {
                dev_set.insert(i);
            }
        }
        self.partition(&dev_set)
    }

    fn partition(
        &self,
        dev_set: &std::collections::HashSet<usize>,
    ) -> Result<(LabeledCorpus, LabeledCorpus)> {
        let mut train = LabeledCorpus::new(self.task.clone(), SplitTag::Train);
        let mut dev = LabeledCorpus::new(self.task.clone(), SplitTag::Dev);
        for (i, s) in self.samples.iter().enumerate() {
            if dev_set.contains(&i) {
                dev.samples.push(s.clone());
            } else {
                train.samples.push(s.clone());
            }
        }
        Ok((train, dev))
    }

    /// Per-label counts for `subtask`. Every label-space label is present
    /// (possibly zero); labels observed outside the declared space get their
    /// own keys so the totals always equal the corpus size.
    pub fn class_counts(&self, subtask: &str) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self
            .task
            .label_space
            .iter()
            .map(|l| (l.clone(), 0))
            .collect();
        for s in &self.samples {
            let key = s.label(subtask).unwrap_or("(missing)").to_string();
            *counts.entry(key).or_insert(0) += 1;
        }
        counts
    }
}
