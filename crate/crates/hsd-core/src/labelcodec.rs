//! Canonical-label <-> text-token mapping for text-to-text backends, with
//! out-of-class (OOC) correction.
//!
//! Generative classifiers sometimes emit strings outside the label-token
//! set, including the empty string. `decode_prediction` is total: trimmed
//! in-vocabulary tokens round-trip, anything else falls back to the majority
//! training label and bumps a counter exposed for reporting.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct LabelCodec {
    /// (label, token) pairs in label-space order
    pairs: Vec<(String, String)>,
    forward: BTreeMap<String, String>,
    backward: BTreeMap<String, String>,
    majority: String,
    ooc: AtomicU64,
}

impl Clone for LabelCodec {
    fn clone(&self) -> Self {
        LabelCodec {
            pairs: self.pairs.clone(),
            forward: self.forward.clone(),
            backward: self.backward.clone(),
            majority: self.majority.clone(),
            ooc: AtomicU64::new(self.ooc.load(Ordering::Relaxed)),
        }
    }
}

/// Serializable form written into run manifests so predictions stay
/// decodable offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecSpec {
    pub labels: Vec<String>,
    pub tokens: Vec<String>,
    pub majority: String,
}

/// Assign decimal-string tokens "0", "1", ... in label-space order and pick
/// the majority label from the training counts (ties broken by label-space
/// order).
pub fn build_codec(
    label_space: &[String],
    train_counts: &BTreeMap<String, usize>,
) -> Result<LabelCodec> {
    if label_space.is_empty() {
        return Err(Error::config("empty label space"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for l in label_space {
        if !seen.insert(l) {
            return Err(Error::config(format!("duplicate label {l:?}")));
        }
    }
    for l in label_space {
        if !train_counts.contains_key(l) {
            return Err(Error::config(format!("train counts missing label {l:?}")));
        }
    }
    let total: usize = label_space.iter().map(|l| train_counts[l]).sum();
    if total == 0 {
        return Err(Error::config("train counts sum to zero"));
    }

    let pairs: Vec<(String, String)> = label_space
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i.to_string()))
        .collect();
    let majority = label_space
        .iter()
        .max_by_key(|l| train_counts[*l])
        .expect("non-empty label space")
        .clone();
    // max_by_key returns the last max; ties must go to the earliest label
    let best = train_counts[&majority];
    let majority = label_space
        .iter()
        .find(|l| train_counts[*l] == best)
        .expect("winner exists")
        .clone();

    Ok(LabelCodec {
        forward: pairs.iter().cloned().collect(),
        backward: pairs.iter().map(|(l, t)| (t.clone(), l.clone())).collect(),
        pairs,
        majority,
        ooc: AtomicU64::new(0),
    })
}

impl LabelCodec {
    pub fn encode_label(&self, label: &str) -> Result<&str> {
        self.forward
            .get(label)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Total decode: trim, look up, otherwise return the majority label and
    /// count the OOC event. Never fails.
    pub fn decode_prediction(&self, raw: &str) -> String {
        let trimmed = raw.trim();
        match self.backward.get(trimmed) {
            Some(label) => label.clone(),
            None => {
                self.ooc.fetch_add(1, Ordering::Relaxed);
                self.majority.clone()
            }
        }
    }

    pub fn majority_label(&self) -> &str {
        &self.majority
    }

    pub fn ooc_count(&self) -> u64 {
        self.ooc.load(Ordering::Relaxed)
    }

    pub fn reset_ooc(&self) {
        self.ooc.store(0, Ordering::Relaxed);
    }

    /// Labels in declared order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(l, _)| l.as_str())
    }

    pub fn num_labels(&self) -> usize {
        self.pairs.len()
    }

    /// Position of a label in the declared order.
    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.pairs
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn label_at(&self, index: usize) -> Option<&str> {
        self.pairs.get(index).map(|(l, _)| l.as_str())
    }

    pub fn to_spec(&self) -> CodecSpec {
        CodecSpec {
            labels: self.pairs.iter().map(|(l, _)| l.clone()).collect(),
            tokens: self.pairs.iter().map(|(_, t)| t.clone()).collect(),
            majority: self.majority.clone(),
        }
    }

    pub fn from_spec(spec: &CodecSpec) -> Result<LabelCodec> {
        if spec.labels.len() != spec.tokens.len() {
            return Err(Error::config("codec spec label/token length mismatch"));
        }
        if !spec.labels.contains(&spec.majority) {
            return Err(Error::config("codec spec majority label not in label set"));
        }
        let pairs: Vec<(String, String)> = spec
            .labels
            .iter()
            .cloned()
            .zip(spec.tokens.iter().cloned())
            .collect();
        Ok(LabelCodec {
            forward: pairs.iter().cloned().collect(),
            backward: pairs.iter().map(|(l, t)| (t.clone(), l.clone())).collect(),
            pairs,
            majority: spec.majority.clone(),
            ooc: AtomicU64::new(0),
        })
    }
}
