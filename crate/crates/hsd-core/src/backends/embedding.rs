//! Vocabulary construction and static word-embedding tables.
//!
//! The static backends are feature-based: a pretrained table (word-per-line
//! `token v1 ... vD` format) supplies frozen vectors. The model vocabulary is
//! the training-corpus vocabulary plus an unknown-token row at index 0;
//! out-of-vocabulary tokens map there.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Mat;

pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Deterministic vocabulary: unknown token first, then the distinct
    /// corpus tokens in sorted order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<String> = texts
            .into_iter()
            .flat_map(str::split_whitespace)
            .map(str::to_string)
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut tokens = Vec::with_capacity(distinct.len() + 1);
        tokens.push(UNK_TOKEN.to_string());
        tokens.extend(distinct);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::Checkpoint(format!(
                "vocab file must start with {UNK_TOKEN}"
            )));
        }
        let index: HashMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::Checkpoint("vocab file has duplicate tokens".into()));
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids for a text, truncated to `max_len`. Empty text maps to a
    /// single unknown token so every sample has at least one row.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<usize> {
        let ids: Vec<usize> = text
            .split_whitespace()
            .take(max_len.max(1))
            .map(|t| self.id(t))
            .collect();
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }
}

/// Raw `token v1 ... vD` file contents.
pub struct EmbeddingFile {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!(
                "cannot read embedding file {}: {e}",
                path.display()
            ))
        })?;
        let mut vectors = HashMap::new();
        let mut dim = 0usize;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().ok_or_else(|| {
                Error::row(path.display().to_string(), (i + 1) as u64, "empty line")
            })?;
            let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| {
                Error::row(
                    path.display().to_string(),
                    (i + 1) as u64,
                    format!("bad vector: {e}"),
                )
            })?;
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(Error::row(
                    path.display().to_string(),
                    (i + 1) as u64,
                    format!("expected {dim} dims, got {}", values.len()),
                ));
            }
            vectors.insert(token.to_string(), values);
        }
        if dim == 0 {
            return Err(Error::config(format!(
                "embedding file {} is empty",
                path.display()
            )));
        }
        Ok(EmbeddingFile { dim, vectors })
    }
}

/// Per-token fallback vector for corpus words the pretrained file misses:
/// seeded from a hash of the token so it is identical across runs and
/// independent of vocabulary order.
fn hash_seeded_vector(token: &str, dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(token.as_bytes());
    let digest = hasher.finalize();
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-0.1..0.1)).collect()
}

/// Assemble the frozen table aligned with `vocab`: row 0 (unknown) is zero,
/// file vectors where available, hash-seeded fallbacks elsewhere.
pub fn build_embedding_matrix(
    vocab: &Vocab,
    file: &EmbeddingFile,
    expected_dim: usize,
) -> Result<Mat> {
    if file.dim != expected_dim {
        return Err(Error::config(format!(
            "embedding file has {} dims but the backend expects {expected_dim}",
            file.dim
        )));
    }
    let mut table = Mat::zeros((vocab.len(), expected_dim));
    for (i, token) in vocab.tokens().iter().enumerate() {
        if i == 0 {
            continue;
        }
        let vector = match file.vectors.get(token) {
            Some(v) => v.clone(),
            None => hash_seeded_vector(token, expected_dim),
        };
        for (j, v) in vector.iter().enumerate() {
            table[(i, j)] = *v;
        }
    }
    Ok(table)
}
