//! The uniform training protocol: a fixed number of epochs, per-epoch dev
//! loss, persistence of the best epoch's weights, adaptive-moment updates
//! with an optional linear warmup/decay schedule, and prediction.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::checkpoint::{load_model, save_checkpoint, Checkpoint, LoadedModel};
use super::{bilstm, cnn, encoder, text2text};
use super::{BackendKind, Model, ParamIds, PredictionSet};
use crate::corpus::{LabeledCorpus, Sample};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Mat, NodeId, Tape};

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
}

impl Adam {
    fn new(params: &[(String, Mat)]) -> Self {
        Adam {
            m: params
                .iter()
                .map(|(_, p)| Mat::zeros(p.raw_dim()))
                .collect(),
            v: params
                .iter()
                .map(|(_, p)| Mat::zeros(p.raw_dim()))
                .collect(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [(String, Mat)], grads: &[Mat], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .map(|(_, p)| p)
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(param)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }
}

/// Linear warmup to the base rate, then linear decay to zero. Static
/// backends use the base rate throughout.
fn scheduled_lr(model: &Model, step: usize, total_steps: usize) -> f64 {
    let base = model.config.learning_rate;
    if !model.config.kind.uses_warmup() {
        return base;
    }
    let warmup = ((model.config.warmup_fraction * total_steps as f64).ceil() as usize).max(1);
    if step <= warmup {
        base * step as f64 / warmup as f64
    } else if total_steps > warmup {
        base * (total_steps - step) as f64 / (total_steps - warmup) as f64
    } else {
        base
    }
}

struct TapeContext {
    tape: Tape,
    ids: ParamIds,
    frozen: Option<NodeId>,
}

fn start_tape(model: &Model) -> TapeContext {
    let mut tape = Tape::new();
    let mut ids = BTreeMap::new();
    for (name, value) in &model.params {
        ids.insert(name.clone(), tape.leaf(value.clone()));
    }
    let frozen = model
        .frozen_embedding
        .as_ref()
        .map(|table| tape.leaf(table.clone()));
    TapeContext { tape, ids, frozen }
}

/// Loss node for one sample. Classification kinds use softmax cross-entropy
/// against the label index; the text-to-text kind uses teacher forcing over
/// the encoded label tokens.
fn sample_loss(
    ctx: &mut TapeContext,
    model: &Model,
    sample: &Sample,
    dropout_rng: Option<&mut ChaCha12Rng>,
) -> Result<NodeId> {
    let label = sample.label(&model.task.subtask).ok_or_else(|| {
        Error::config(format!(
            "sample {} has no label for {:?}",
            sample.id, model.task.subtask
        ))
    })?;
    let ids = model.input_ids(&sample.text);
    let dropout = dropout_rng
        .map(|rng| (rng, model.config.dropout))
        .filter(|(_, rate)| *rate > 0.0);
    match model.config.kind {
        BackendKind::Text2Text => {
            let token = model.codec.encode_label(label)?;
            let target = text2text::encode_target(token);
            Ok(text2text::sequence_loss(
                &mut ctx.tape,
                &ctx.ids,
                &ids,
                &target,
                model.config.hidden_size,
                dropout,
            ))
        }
        kind => {
            let class = model.codec.label_index(label)?;
            let logits = class_logits(ctx, model, kind, &ids, dropout);
            Ok(ctx.tape.softmax_cross_entropy(logits, &[class]))
        }
    }
}

fn class_logits(
    ctx: &mut TapeContext,
    model: &Model,
    kind: BackendKind,
    ids: &[usize],
    dropout: Option<(&mut ChaCha12Rng, f64)>,
) -> NodeId {
    match kind {
        BackendKind::Bilstm => {
            let table = ctx.frozen.expect("static backend has a frozen table");
            let embedded = ctx.tape.gather_rows(table, ids);
            bilstm::logits_from_embedded(
                &mut ctx.tape,
                &ctx.ids,
                embedded,
                model.config.hidden_size,
                dropout,
            )
        }
        BackendKind::Cnn => {
            let table = ctx.frozen.expect("static backend has a frozen table");
            let embedded = ctx.tape.gather_rows(table, ids);
            cnn::logits_from_embedded(&mut ctx.tape, &ctx.ids, embedded, dropout)
        }
        BackendKind::EncoderClassifier => encoder::logits_from_ids(
            &mut ctx.tape,
            &ctx.ids,
            ids,
            model.config.hidden_size,
            dropout,
        ),
        BackendKind::Text2Text => unreachable!("text2text has no class logits"),
    }
}

/// Mean loss over a batch of samples (one tape).
fn batch_loss(
    model: &Model,
    batch: &[&Sample],
    dropout_rng: Option<&mut ChaCha12Rng>,
) -> Result<(f64, Vec<Mat>)> {
    let mut ctx = start_tape(model);
    let mut rng = dropout_rng;
    let losses: Vec<NodeId> = batch
        .iter()
        .map(|s| sample_loss(&mut ctx, model, s, rng.as_deref_mut()))
        .collect::<Result<_>>()?;
    let stacked = ctx.tape.stack_rows(&losses);
    let loss = ctx.tape.mean_rows(stacked);
    let value = ctx.tape.scalar(loss);
    let grads = ctx.tape.backward(loss);
    let grad_mats: Vec<Mat> = model
        .params
        .iter()
        .map(|(name, p)| {
            grads
                .get(ctx.ids[name])
                .cloned()
                .unwrap_or_else(|| Mat::zeros(p.raw_dim()))
        })
        .collect();
    Ok((value, grad_mats))
}

/// Mean loss without gradient bookkeeping or dropout (dev evaluation).
fn eval_loss(model: &Model, corpus: &LabeledCorpus) -> Result<f64> {
    let losses = par::map_ordered(&corpus.samples, |s| -> Result<f64> {
        let mut ctx = start_tape(model);
        let loss = sample_loss(&mut ctx, model, s, None)?;
        Ok(ctx.tape.scalar(loss))
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / corpus.len().max(1) as f64)
}

/// Train for exactly `config.epochs` epochs, evaluating the dev loss each
/// epoch and persisting the weights of the epoch with the minimum dev loss
/// into `out_dir`.
pub fn train(
    mut model: Model,
    train: &LabeledCorpus,
    dev: &LabeledCorpus,
    out_dir: &Path,
) -> Result<Checkpoint> {
    train_with_lineage(&mut model, train, dev, out_dir, None)
}

pub(crate) fn train_with_lineage(
    model: &mut Model,
    train: &LabeledCorpus,
    dev: &LabeledCorpus,
    out_dir: &Path,
    lineage: Option<String>,
) -> Result<Checkpoint> {
    if train.is_empty() {
        return Err(Error::config("empty training corpus"));
    }
    if dev.is_empty() {
        return Err(Error::config("empty dev corpus"));
    }
    let epochs = model.config.epochs;
    let batch_size = model.config.batch_size;
    let batches_per_epoch = train.len().div_ceil(batch_size);
    let total_steps = batches_per_epoch * epochs;

    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(model.config.seed);
    let mut dropout_rng = ChaCha12Rng::seed_from_u64(model.config.seed.wrapping_add(1));
    let mut adam = Adam::new(&model.params);
    // (epoch, dev loss, params snapshot) of the best epoch so far
    type Best = (usize, f64, Vec<(String, Mat)>);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut dev_losses = Vec::with_capacity(epochs);
    let mut best: Option<Best> = None;
    let mut step = 0usize;

    for epoch in 1..=epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let (value, grads) = batch_loss(model, &batch, Some(&mut dropout_rng))?;
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: format!("non-finite training loss {value}"),
                });
            }
            step += 1;
            let lr = scheduled_lr(model, step, total_steps);
            adam.update(&mut model.params, &grads, lr);
        }
        let dev_loss = eval_loss(model, dev)?;
        if !dev_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("non-finite validation loss {dev_loss}"),
            });
        }
        dev_losses.push(dev_loss);
        let improved = best
            .as_ref()
            .map(|(_, loss, _)| dev_loss < *loss)
            .unwrap_or(true);
        if improved {
            best = Some((epoch, dev_loss, model.params.clone()));
        }
    }

    let (best_epoch, best_val_loss, best_params) = best.expect("at least one epoch ran");
    model.params = best_params;
    save_checkpoint(
        model,
        out_dir,
        best_val_loss,
        best_epoch,
        dev_losses,
        lineage,
    )
}

/// Run the experiment `seeds.len()` times (the protocol repeats each
/// experiment with consecutive seeds), fanning out across threads when the
/// `parallel` feature is on. Each run trains an independently built model
/// and writes `run-<seed>` under `out_dir`.
pub fn train_repeated(
    build: impl Fn(u64) -> Result<Model> + Sync,
    seeds: &[u64],
    train_corpus: &LabeledCorpus,
    dev: &LabeledCorpus,
    out_dir: &Path,
) -> Result<Vec<Checkpoint>> {
    let results = par::map_ordered(seeds, |&seed| -> Result<Checkpoint> {
        let model = build(seed)?;
        train(
            model,
            train_corpus,
            dev,
            &out_dir.join(format!("run-{seed}")),
        )
    });
    results.into_iter().collect()
}

/// Predict labels for every sample. Sample order and batch composition do
/// not affect the result; the text-to-text path decodes generated strings
/// through the codec, so every output label is in the task's label space.
pub fn predict(loaded: &LoadedModel, corpus: &LabeledCorpus) -> Result<PredictionSet> {
    let model = &loaded.model;
    model.codec.reset_ooc();
    let labels = par::map_ordered(&corpus.samples, |s| predict_sample(model, &s.text));
    let predictions: BTreeMap<String, String> = corpus
        .samples
        .iter()
        .zip(labels)
        .map(|(s, label)| (s.id.clone(), label))
        .collect();
    let ooc_count = match model.config.kind {
        BackendKind::Text2Text => Some(model.codec.ooc_count()),
        _ => None,
    };
    Ok(PredictionSet {
        task: model.task.clone(),
        predictions,
        provenance: loaded.dir.display().to_string(),
        ooc_count,
    })
}

/// Label for one text. Public so callers can drive single samples (the
/// benchmark suite uses this as the sequential baseline).
pub fn predict_sample(model: &Model, text: &str) -> String {
    let ids = model.input_ids(text);
    match model.config.kind {
        BackendKind::Text2Text => {
            let mut ctx = start_tape(model);
            let raw = text2text::generate(&mut ctx.tape, &ctx.ids, &ids, model.config.hidden_size);
            model.codec.decode_prediction(&raw)
        }
        kind => {
            let mut ctx = start_tape(model);
            let logits = class_logits(&mut ctx, model, kind, &ids, None);
            let row = ctx.tape.value(logits);
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (i, v) in row.row(0).iter().enumerate() {
                if *v > best_v {
                    best_v = *v;
                    best = i;
                }
            }
            model
                .codec
                .label_at(best)
                .expect("head width equals label count")
                .to_string()
        }
    }
}

impl Model {
    /// Embedded input rows for surface tokens: the frozen table for the
    /// static backends, the trainable token embedding otherwise.
    pub(crate) fn embed_tokens_matrix(&self, tokens: &[String]) -> Mat {
        let table = match (&self.frozen_embedding, self.config.kind) {
            (Some(frozen), _) => frozen,
            (None, BackendKind::EncoderClassifier) => {
                &self
                    .params
                    .iter()
                    .find(|(n, _)| n == "embed")
                    .expect("encoder embed")
                    .1
            }
            (None, _) => {
                &self
                    .params
                    .iter()
                    .find(|(n, _)| n == "enc.embed")
                    .expect("text2text embed")
                    .1
            }
        };
        let mut out = Mat::zeros((tokens.len().max(1), table.ncols()));
        if tokens.is_empty() {
            out.row_mut(0).assign(&table.row(0));
            return out;
        }
        for (i, token) in tokens.iter().enumerate() {
            out.row_mut(i).assign(&table.row(self.vocab.id(token)));
        }
        out
    }

    fn logits_node_from_embedded(&self, ctx: &mut TapeContext, embedded: NodeId) -> NodeId {
        match self.config.kind {
            BackendKind::Bilstm => bilstm::logits_from_embedded(
                &mut ctx.tape,
                &ctx.ids,
                embedded,
                self.config.hidden_size,
                None,
            ),
            BackendKind::Cnn => cnn::logits_from_embedded(&mut ctx.tape, &ctx.ids, embedded, None),
            BackendKind::EncoderClassifier => encoder::logits_from_embedded(
                &mut ctx.tape,
                &ctx.ids,
                embedded,
                self.config.hidden_size,
                None,
            ),
            BackendKind::Text2Text => {
                panic!("text2text has no differentiable class score")
            }
        }
    }

    /// Score of `class` and its gradient with respect to the embedded input.
    pub(crate) fn class_score_and_grad(&self, embedded: &Mat, class: usize) -> (f64, Mat) {
        let mut ctx = start_tape(self);
        let x = ctx.tape.leaf(embedded.clone());
        let logits = self.logits_node_from_embedded(&mut ctx, x);
        let score = ctx.tape.slice_cols(logits, class, class + 1);
        let value = ctx.tape.scalar(score);
        let grads = ctx.tape.backward(score);
        let grad = grads
            .get(x)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(embedded.raw_dim()));
        (value, grad)
    }

    pub(crate) fn predict_class_from_embedded(&self, embedded: &Mat) -> usize {
        let mut ctx = start_tape(self);
        let x = ctx.tape.leaf(embedded.clone());
        let logits = self.logits_node_from_embedded(&mut ctx, x);
        let row = ctx.tape.value(logits);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (i, v) in row.row(0).iter().enumerate() {
            if *v > best_v {
                best_v = *v;
                best = i;
            }
        }
        best
    }

    /// Softmax probability of `class` for one text (classification kinds).
    pub(crate) fn class_probability(&self, text: &str, class: usize) -> f64 {
        let ids = self.input_ids(text);
        let mut ctx = start_tape(self);
        let logits = class_logits(&mut ctx, self, self.config.kind, &ids, None);
        let probs = crate::tensor::softmax(ctx.tape.value(logits));
        probs[(0, class)]
    }

    /// Teacher-forced probability of `label`'s token string for one text
    /// (text-to-text kind).
    pub(crate) fn label_probability(&self, text: &str, label: &str) -> Result<f64> {
        let token = self.codec.encode_label(label)?;
        let target = text2text::encode_target(token);
        let ids = self.input_ids(text);
        let mut ctx = start_tape(self);
        Ok(text2text::sequence_probability(
            &mut ctx.tape,
            &ctx.ids,
            &ids,
            &target,
            self.config.hidden_size,
        ))
    }
}

/// Copy every identically-named, identically-shaped tensor from `source`
/// into `target`; for trainable embeddings the rows of shared vocabulary
/// tokens are copied individually. Everything else keeps its fresh
/// initialization.
pub(crate) fn transfer_weights(source: &Model, target: &mut Model) {
    let source_params: BTreeMap<&str, &Mat> =
        source.params.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let embedding_names = ["embed", "enc.embed"];
    for (name, value) in target.params.iter_mut() {
        let Some(src) = source_params.get(name.as_str()) else {
            continue;
        };
        if src.dim() == value.dim() {
            value.assign(src);
            continue;
        }
        if embedding_names.contains(&name.as_str()) && src.ncols() == value.ncols() {
            for (row, token) in target.vocab.tokens().iter().enumerate() {
                let src_row = source.vocab.id(token);
                if src_row != 0 || token == super::UNK_TOKEN {
                    value.row_mut(row).assign(&src.row(src_row));
                }
            }
        }
        if name == "pos" && src.ncols() == value.ncols() {
            let rows = src.nrows().min(value.nrows());
            for r in 0..rows {
                value.row_mut(r).assign(&src.row(r));
            }
        }
    }
}

/// Fine-tune on a source subtask, then continue from the saved source
/// checkpoint on the target subtask. Both subtasks must be binary and use
/// the same backend kind; the label codec is rebuilt for the target.
#[allow(clippy::too_many_arguments)]
pub fn cross_task_train(
    source_model: Model,
    source_train: &LabeledCorpus,
    source_dev: &LabeledCorpus,
    target_model: Model,
    target_train: &LabeledCorpus,
    target_dev: &LabeledCorpus,
    out_dir: &Path,
) -> Result<Checkpoint> {
    if source_model.task.label_space.len() != 2 || target_model.task.label_space.len() != 2 {
        return Err(Error::config(
            "cross-task training is limited to binary subtasks",
        ));
    }
    if source_model.config.kind != target_model.config.kind {
        return Err(Error::config(format!(
            "cross-task backends differ: {} vs {}",
            source_model.config.kind, target_model.config.kind
        )));
    }
    let source_dir = out_dir.join("source");
    let source_ckpt = train(source_model, source_train, source_dev, &source_dir)?;
    let source_loaded = load_model(&source_ckpt.dir)?;

    let mut target_model = target_model;
    transfer_weights(&source_loaded.model, &mut target_model);
    train_with_lineage(
        &mut target_model,
        target_train,
        target_dev,
        &out_dir.join("target"),
        Some(source_ckpt.dir.display().to_string()),
    )
}

/// Largest relative error between analytic gradients and central finite
/// differences over the parameters selected by `param_filter`, on one batch.
/// Probes up to `max_probes` entries per tensor, deterministically spread.
pub fn gradient_check_max_rel_err(
    model: &Model,
    batch: &[&Sample],
    param_filter: impl Fn(&str) -> bool,
    max_probes: usize,
) -> Result<f64> {
    let (_, grads) = batch_loss(model, batch, None)?;
    let eval = |m: &Model| -> Result<f64> {
        let mut ctx = start_tape(m);
        let losses: Vec<NodeId> = batch
            .iter()
            .map(|s| sample_loss(&mut ctx, m, s, None))
            .collect::<Result<_>>()?;
        let stacked = ctx.tape.stack_rows(&losses);
        let loss = ctx.tape.mean_rows(stacked);
        Ok(ctx.tape.scalar(loss))
    };

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe_model = model.clone();
    for (pi, (name, param)) in model.params.iter().enumerate() {
        if !param_filter(name) {
            continue;
        }
        let n = param.len();
        let stride = n.div_ceil(max_probes).max(1);
        for flat in (0..n).step_by(stride) {
            let (r, c) = (flat / param.ncols(), flat % param.ncols());
            let original = param[(r, c)];
            probe_model.params[pi].1[(r, c)] = original + h;
            let plus = eval(&probe_model)?;
            probe_model.params[pi].1[(r, c)] = original - h;
            let minus = eval(&probe_model)?;
            probe_model.params[pi].1[(r, c)] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads[pi][(r, c)];
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
