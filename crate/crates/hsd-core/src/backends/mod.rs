//! The four model families and the shared training protocol.
//!
//! All backends are desk-scale native implementations trained in f64 on the
//! CPU: a two-layer bidirectional recurrent net and a convolutional net over
//! frozen pretrained word vectors, a self-attention encoder classifier, and
//! an encoder-decoder text-to-text model that emits label-token strings.
//! `pretrained-id` values resolve against local checkpoint directories, and
//! cross-task fine-tuning continues from such a checkpoint.

mod bilstm;
mod checkpoint;
mod cnn;
mod embedding;
mod encoder;
mod text2text;
mod train;

pub use checkpoint::{load_manifest, load_model, Checkpoint, CheckpointManifest, LoadedModel};
pub use cnn::conv_bank_parameter_count;
pub use embedding::{build_embedding_matrix, EmbeddingFile, Vocab, UNK_TOKEN};
pub use train::{
    cross_task_train, gradient_check_max_rel_err, predict, predict_sample, train, train_repeated,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, TaskSpec};
use crate::error::{Error, Result};
use crate::labelcodec::{build_codec, LabelCodec};
use crate::tensor::{Mat, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Bilstm,
    Cnn,
    EncoderClassifier,
    Text2Text,
}

impl BackendKind {
    pub fn is_static_embedding(self) -> bool {
        matches!(self, BackendKind::Bilstm | BackendKind::Cnn)
    }

    pub fn uses_warmup(self) -> bool {
        matches!(
            self,
            BackendKind::EncoderClassifier | BackendKind::Text2Text
        )
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BackendKind::Bilstm => "bilstm",
            BackendKind::Cnn => "cnn",
            BackendKind::EncoderClassifier => "encoder-classifier",
            BackendKind::Text2Text => "text2text",
        };
        f.write_str(s)
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilstm" => Ok(BackendKind::Bilstm),
            "cnn" => Ok(BackendKind::Cnn),
            "encoder-classifier" => Ok(BackendKind::EncoderClassifier),
            "text2text" => Ok(BackendKind::Text2Text),
            other => Err(Error::config(format!("unknown backend kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    Base,
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub size: ModelSize,
    /// path of a checkpoint directory to initialize weights from
    pub pretrained_id: Option<String>,
    pub embedding_dim: usize,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_seq_len: usize,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub dropout: f64,
    pub task_prefix: String,
    pub seed: u64,
}

impl BackendConfig {
    /// Defaults for a backend kind at base size.
    pub fn preset(kind: BackendKind) -> Self {
        Self::preset_sized(kind, ModelSize::Base)
    }

    pub fn preset_sized(kind: BackendKind, size: ModelSize) -> Self {
        let mut cfg = BackendConfig {
            kind,
            size,
            pretrained_id: None,
            embedding_dim: 100,
            hidden_size: 64,
            batch_size: 32,
            learning_rate: 1e-3,
            max_seq_len: 64,
            epochs: 6,
            warmup_fraction: 0.10,
            dropout: 0.5,
            task_prefix: String::new(),
            seed: 42,
        };
        match kind {
            BackendKind::Bilstm | BackendKind::Cnn => {}
            BackendKind::EncoderClassifier => {
                cfg.batch_size = 32;
                cfg.learning_rate = 1e-5;
                cfg.max_seq_len = 256;
                cfg.hidden_size = 64;
                cfg.dropout = 0.1;
            }
            BackendKind::Text2Text => {
                cfg.task_prefix = "classification ".to_string();
                cfg.learning_rate = 5e-3;
                cfg.dropout = 0.1;
                match size {
                    ModelSize::Base => {
                        cfg.batch_size = 16;
                        cfg.hidden_size = 64;
                    }
                    ModelSize::Small => {
                        cfg.batch_size = 64;
                        cfg.hidden_size = 32;
                    }
                }
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::config(
                "epochs, batch-size and hidden-size must be positive",
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning-rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup-fraction must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-sample predicted labels keyed by sample id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionSet {
    pub task: TaskSpec,
    pub predictions: BTreeMap<String, String>,
    /// checkpoint or ensemble identifier this set came from
    pub provenance: String,
    /// out-of-class corrections applied (text-to-text only)
    pub ooc_count: Option<u64>,
}

impl PredictionSet {
    /// `sample-id<TAB>label` rows, newline-terminated.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (id, label) in &self.predictions {
            writeln!(out, "{id}\t{label}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a prediction file produced by any backend or ensemble.
    pub fn read_file(path: &Path, task: &TaskSpec) -> Result<Self> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let mut predictions = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id, label) = line
                .split_once('\t')
                .ok_or_else(|| Error::row(&display, (i + 1) as u64, "expected <id>\\t<label>"))?;
            if predictions
                .insert(id.to_string(), label.to_string())
                .is_some()
            {
                return Err(Error::row(
                    &display,
                    (i + 1) as u64,
                    format!("duplicate id {id:?}"),
                ));
            }
        }
        Ok(PredictionSet {
            task: task.clone(),
            predictions,
            provenance: display,
            ooc_count: None,
        })
    }
}

pub(crate) type ParamIds = BTreeMap<String, NodeId>;

pub(crate) fn init_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Inverted-dropout mask as a constant tape leaf.
pub(crate) fn dropout_mask(
    tape: &mut Tape,
    rng: &mut ChaCha12Rng,
    rate: f64,
    shape: (usize, usize),
) -> NodeId {
    let keep = 1.0 - rate;
    let mask = Mat::from_shape_fn(shape, |_| {
        if rng.random_range(0.0..1.0) < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    tape.leaf(mask)
}

/// A built (possibly untrained) model: configuration, vocabulary, label
/// codec and parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: BackendConfig,
    pub task: TaskSpec,
    pub codec: LabelCodec,
    pub vocab: Vocab,
    /// named trainable parameters, in creation order
    pub params: Vec<(String, Mat)>,
    /// frozen embedding table for the static backends
    pub frozen_embedding: Option<Mat>,
}

impl Model {
    pub fn trainable_parameter_count(&self) -> usize {
        self.params.iter().map(|(_, m)| m.len()).sum()
    }

    pub fn total_parameter_count(&self) -> usize {
        self.trainable_parameter_count() + self.frozen_embedding.as_ref().map_or(0, |m| m.len())
    }

    /// Input string for a sample text; the text-to-text task prefix is
    /// prepended verbatim (its trailing space is significant).
    pub fn input_text(&self, text: &str) -> String {
        if self.config.task_prefix.is_empty() {
            text.to_string()
        } else {
            format!("{}{}", self.config.task_prefix, text)
        }
    }

    pub fn input_ids(&self, text: &str) -> Vec<usize> {
        self.vocab
            .encode(&self.input_text(text), self.config.max_seq_len)
    }
}

/// Build a backend over a training corpus. Static-embedding kinds require a
/// pretrained table; `pretrained-id`, when set, must resolve to an existing
/// checkpoint directory whose compatible weights seed this model.
pub fn build_backend(
    config: &BackendConfig,
    task: &TaskSpec,
    train_corpus: &LabeledCorpus,
    embeddings: Option<&EmbeddingFile>,
) -> Result<Model> {
    config.validate()?;
    task.validate()?;
    let counts = train_corpus.class_counts(&task.subtask);
    let codec = build_codec(&task.label_space, &counts)?;
    let classes = task.label_space.len();

    let prefix = &config.task_prefix;
    let texts: Vec<String> = train_corpus
        .samples
        .iter()
        .map(|s| {
            if prefix.is_empty() {
                s.text.clone()
            } else {
                format!("{prefix}{}", s.text)
            }
        })
        .collect();
    let vocab = Vocab::build(texts.iter().map(String::as_str));

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let (params, frozen_embedding) = match config.kind {
        BackendKind::Bilstm => {
            let file = embeddings.ok_or_else(|| {
                Error::config("bilstm needs a static embedding table".to_string())
            })?;
            let table = build_embedding_matrix(&vocab, file, config.embedding_dim)?;
            (
                bilstm::init(&mut rng, config.embedding_dim, config.hidden_size, classes),
                Some(table),
            )
        }
        BackendKind::Cnn => {
            let file = embeddings
                .ok_or_else(|| Error::config("cnn needs a static embedding table".to_string()))?;
            let table = build_embedding_matrix(&vocab, file, config.embedding_dim)?;
            (
                cnn::init(&mut rng, config.embedding_dim, classes),
                Some(table),
            )
        }
        BackendKind::EncoderClassifier => (
            encoder::init(
                &mut rng,
                vocab.len(),
                config.hidden_size,
                config.max_seq_len,
                classes,
            ),
            None,
        ),
        BackendKind::Text2Text => (
            text2text::init(
                &mut rng,
                vocab.len(),
                config.hidden_size,
                config.hidden_size,
            ),
            None,
        ),
    };

    let mut model = Model {
        config: config.clone(),
        task: task.clone(),
        codec,
        vocab,
        params,
        frozen_embedding,
    };

    if let Some(pretrained) = &config.pretrained_id {
        let source = checkpoint::load_model(Path::new(pretrained))?;
        if source.model.config.kind != config.kind {
            return Err(Error::config(format!(
                "pretrained checkpoint is a {} model, expected {}",
                source.model.config.kind, config.kind
            )));
        }
        train::transfer_weights(&source.model, &mut model);
    }
    Ok(model)
}
