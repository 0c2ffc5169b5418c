//! Checkpoint persistence: a directory holding `manifest.toml` (config,
//! codec, seeds, loss curve), `vocab.txt` and `weights.bin`.
//!
//! The weights file is a little-endian binary: magic `HSDW`, format version,
//! tensor count, then per tensor a length-prefixed name, row/column counts
//! and the f64 data.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{BackendConfig, Model, Vocab};
use crate::corpus::TaskSpec;
use crate::error::{Error, Result};
use crate::labelcodec::{CodecSpec, LabelCodec};
use crate::tensor::Mat;

const MAGIC: &[u8; 4] = b"HSDW";
const VERSION: u32 = 1;
const FROZEN_EMBEDDING: &str = "frozen.embedding";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: BackendConfig,
    pub task: TaskSpec,
    pub codec: CodecSpec,
    pub run_seed: u64,
    pub best_val_loss: f64,
    /// 1-based epoch whose weights were persisted
    pub best_epoch: usize,
    pub dev_losses: Vec<f64>,
    /// checkpoint directory this run continued from, if any
    pub lineage: Option<String>,
    pub trainable_parameters: usize,
    pub total_parameters: usize,
    pub created: String,
}

/// Trained-model artifact: directory handle plus its manifest.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub dir: PathBuf,
    pub manifest: CheckpointManifest,
}

/// A checkpoint loaded back into memory, ready for prediction or continued
/// fine-tuning.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: Model,
    pub manifest: CheckpointManifest,
    pub dir: PathBuf,
}

pub(crate) fn save_checkpoint(
    model: &Model,
    dir: &Path,
    best_val_loss: f64,
    best_epoch: usize,
    dev_losses: Vec<f64>,
    lineage: Option<String>,
) -> Result<Checkpoint> {
    std::fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest {
        config: model.config.clone(),
        task: model.task.clone(),
        codec: model.codec.to_spec(),
        run_seed: model.config.seed,
        best_val_loss,
        best_epoch,
        dev_losses,
        lineage,
        trainable_parameters: model.trainable_parameter_count(),
        total_parameters: model.total_parameter_count(),
        created: chrono::Utc::now().to_rfc3339(),
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Checkpoint(format!("serialize manifest: {e}")))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    std::fs::write(
        dir.join("vocab.txt"),
        model.vocab.tokens().join("\n") + "\n",
    )?;

    let mut entries: Vec<(&str, &Mat)> =
        model.params.iter().map(|(n, m)| (n.as_str(), m)).collect();
    if let Some(frozen) = &model.frozen_embedding {
        entries.push((FROZEN_EMBEDDING, frozen));
    }
    write_weights(&dir.join("weights.bin"), &entries)?;
    Ok(Checkpoint {
        dir: dir.to_path_buf(),
        manifest,
    })
}

pub fn load_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join("manifest.toml");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("cannot parse {}: {e}", path.display())))
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let manifest = load_manifest(dir)?;
    let vocab_text = std::fs::read_to_string(dir.join("vocab.txt"))
        .map_err(|e| Error::Checkpoint(format!("cannot read vocab: {e}")))?;
    let vocab = Vocab::from_tokens(vocab_text.lines().map(str::to_string).collect())?;
    let mut tensors = read_weights(&dir.join("weights.bin"))?;
    let frozen_embedding = tensors
        .iter()
        .position(|(n, _)| n == FROZEN_EMBEDDING)
        .map(|i| tensors.remove(i).1);
    let codec = LabelCodec::from_spec(&manifest.codec)?;
    let model = Model {
        config: manifest.config.clone(),
        task: manifest.task.clone(),
        codec,
        vocab,
        params: tensors,
        frozen_embedding,
    };
    Ok(LoadedModel {
        model,
        manifest,
        dir: dir.to_path_buf(),
    })
}

fn write_weights(path: &Path, entries: &[(&str, &Mat)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(entries.len() as u32)?;
    for (name, mat) in entries {
        let bytes = name.as_bytes();
        out.write_u32::<LittleEndian>(bytes.len() as u32)?;
        out.write_all(bytes)?;
        out.write_u64::<LittleEndian>(mat.nrows() as u64)?;
        out.write_u64::<LittleEndian>(mat.ncols() as u64)?;
        for v in mat.iter() {
            out.write_f64::<LittleEndian>(*v)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_weights(path: &Path) -> Result<Vec<(String, Mat)>> {
    let mut input = std::io::BufReader::new(
        std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a weights file",
            path.display()
        )));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported weights version {version}"
        )));
    }
    let count = input.read_u32::<LittleEndian>()?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = input.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("non-utf8 tensor name".into()))?;
        let rows = input.read_u64::<LittleEndian>()? as usize;
        let cols = input.read_u64::<LittleEndian>()? as usize;
        let mut data = vec![0f64; rows * cols];
        for v in data.iter_mut() {
            *v = input.read_f64::<LittleEndian>()?;
        }
        let mat = Mat::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        tensors.push((name, mat));
    }
    Ok(tensors)
}
