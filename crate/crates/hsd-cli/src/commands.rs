use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;

use hsd_core::augment::{
    augment_generative, delete_boundary, CommandGenerator, DecodingParams, Lexicon,
    RecordingGenerator, ReplayGenerator, ResponseGenerator,
};
use hsd_core::backends::{
    build_backend, load_model, BackendConfig, BackendKind, EmbeddingFile, ModelSize, PredictionSet,
};
use hsd_core::corpus::{load_dataset, load_snapshot, write_snapshot, DatasetDescriptor, SplitTag};
use hsd_core::evaluate::{
    aggregate_runs, confusion_matrix, f1_scores, find_disagreements, t_test, write_audit_file,
    EvalReport,
};
use hsd_core::explain::{
    integrated_gradients_batch, render_report, shap_values, write_attribution_tsv,
    ClassProbabilityScorer, ColorScheme, LabelProbabilityScorer, ModelScorer, ShapConfig,
};
use hsd_core::manifest::RunManifest;
use hsd_core::preprocess::clean_corpus;

use crate::config::FileConfig;

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

// ---------------------------------------------------------------------------
// prepare

#[derive(Args)]
pub struct PrepareArgs {
    /// dataset file (tsv or csv with a header row)
    #[arg(long)]
    data: PathBuf,
    /// dataset descriptor (see descriptors/)
    #[arg(long)]
    descriptor: PathBuf,
    /// subtask id declared in the descriptor
    #[arg(long)]
    subtask: String,
    /// which declared split this file is
    #[arg(long, default_value = "train")]
    split: String,
    /// dev fraction split off the training set
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// stratify the dev split by label
    #[arg(long)]
    stratify: bool,
    #[arg(long)]
    out: PathBuf,
}

pub fn prepare(args: PrepareArgs, file: &FileConfig) -> anyhow::Result<()> {
    let dev_fraction = args
        .dev_fraction
        .or(file.prepare.dev_fraction)
        .unwrap_or(0.10);
    let seed = args.seed.or(file.prepare.seed).unwrap_or(42);
    let stratify = args.stratify || file.prepare.stratify.unwrap_or(false);
    let split = match args.split.as_str() {
        "train" => SplitTag::Train,
        "dev" => SplitTag::Dev,
        "test" => SplitTag::Test,
        other => bail!("unknown split {other:?} (expected train, dev or test)"),
    };

    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("prepare");
    manifest.seed = Some(seed);
    manifest
        .input("data", args.data.display())
        .input("descriptor", args.descriptor.display())
        .setting("subtask", &args.subtask)
        .setting("split", &args.split)
        .setting("dev-fraction", dev_fraction)
        .setting("stratify", stratify);

    let descriptor = DatasetDescriptor::load(&args.descriptor)?;
    let task = descriptor.task_spec(&args.subtask)?;
    let columns = descriptor.column_map();
    let (corpus, load_report) = load_dataset(&args.data, &task, &columns, split)?;
    for w in &load_report.warnings {
        eprintln!("warning: {w}");
    }
    if corpus.is_empty() {
        bail!("empty corpus: {} has no data rows", args.data.display());
    }
    let (corpus, drop_report) = corpus.drop_invalid(&args.subtask)?;
    if corpus.is_empty() {
        bail!(
            "empty corpus: every row lacked a {} label or duplicated another",
            args.subtask
        );
    }
    let (corpus, removed_empty) = clean_corpus(&corpus);
    if corpus.is_empty() {
        bail!("empty corpus: all texts cleaned to the empty string");
    }
    println!(
        "loaded {} rows ({} dropped for missing labels, {} duplicates, {} cleaned away)",
        corpus.len(),
        drop_report.missing_label,
        drop_report.duplicates,
        removed_empty
    );

    let full_counts = corpus.class_counts(&args.subtask);
    let mut stats = toml::map::Map::new();
    stats.insert(
        "class_counts_full".to_string(),
        toml::Value::try_from(&full_counts)?,
    );

    let mut outputs = Vec::new();
    if split == SplitTag::Train {
        let (train_c, dev_c) = if stratify {
            corpus.split_dev_stratified(dev_fraction, seed)?
        } else {
            corpus.split_dev(dev_fraction, seed)?
        };
        println!("split: {} train / {} dev", train_c.len(), dev_c.len());
        stats.insert(
            "class_counts_train_after_split".to_string(),
            toml::Value::try_from(train_c.class_counts(&args.subtask))?,
        );
        stats.insert(
            "class_counts_dev".to_string(),
            toml::Value::try_from(dev_c.class_counts(&args.subtask))?,
        );
        let train_path = args.out.join("train.tsv");
        let dev_path = args.out.join("dev.tsv");
        write_snapshot(&train_c, &train_path)?;
        write_snapshot(&dev_c, &dev_path)?;
        outputs.push(train_path);
        outputs.push(dev_path);
    } else {
        let path = args.out.join(format!("{split}.tsv"));
        write_snapshot(&corpus, &path)?;
        outputs.push(path);
    }

    std::fs::write(
        args.out.join("stats.toml"),
        toml::to_string_pretty(&toml::Value::Table(stats))?,
    )?;
    for o in &outputs {
        manifest.output(o.display());
    }
    manifest.write(&args.out.join("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// augment

#[derive(Args)]
pub struct AugmentArgs {
    /// cleaned corpus snapshot (from `prepare`)
    #[arg(long = "in", value_name = "SNAPSHOT")]
    input: PathBuf,
    /// deletion | generative
    #[arg(long)]
    method: String,
    /// offensive-word lexicon, one token per line (deletion)
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// exclusion list subtracted from the lexicon
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// replay fixture file backing the generator (generative)
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// external generator command reading the prompt on stdin (generative)
    #[arg(long)]
    generator_cmd: Option<String>,
    /// extra arguments for --generator-cmd
    #[arg(long)]
    generator_arg: Vec<String>,
    /// record generator responses into this fixture file
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    no_repeat_ngram: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn augment(args: AugmentArgs, file: &FileConfig) -> anyhow::Result<()> {
    let corpus = load_snapshot(&args.input)?;
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("augment");
    manifest
        .input("corpus", args.input.display())
        .setting("method", &args.method);

    let defaults = DecodingParams::default();
    let params = DecodingParams {
        top_p: args.top_p.or(file.augment.top_p).unwrap_or(defaults.top_p),
        top_k: args.top_k.or(file.augment.top_k).unwrap_or(defaults.top_k),
        temperature: args
            .temperature
            .or(file.augment.temperature)
            .unwrap_or(defaults.temperature),
        max_new_tokens: args
            .max_new_tokens
            .or(file.augment.max_new_tokens)
            .unwrap_or(defaults.max_new_tokens),
        no_repeat_ngram: args
            .no_repeat_ngram
            .or(file.augment.no_repeat_ngram)
            .unwrap_or(defaults.no_repeat_ngram),
    };

    let (merged, stats) = match args.method.as_str() {
        "deletion" => {
            let lexicon_path = args
                .lexicon
                .as_deref()
                .context("--lexicon is required for the deletion method")?;
            let mut lexicon = Lexicon::load(lexicon_path)?;
            manifest.input("lexicon", lexicon_path.display());
            if let Some(exclusions) = &args.exclusions {
                let removed = lexicon.apply_exclusions(&Lexicon::load(exclusions)?);
                manifest.input("exclusions", exclusions.display());
                println!(
                    "lexicon: {} entries loaded, {} excluded, {} used",
                    lexicon.source_size,
                    removed,
                    lexicon.len()
                );
            } else {
                println!("lexicon: {} entries", lexicon.len());
            }
            let (merged, _, stats) = delete_boundary(&corpus, &lexicon);
            (merged, stats)
        }
        "generative" => {
            manifest
                .setting("top-p", params.top_p)
                .setting("top-k", params.top_k)
                .setting("temperature", params.temperature)
                .setting("max-new-tokens", params.max_new_tokens)
                .setting("no-repeat-ngram", params.no_repeat_ngram);
            let run =
                |generator: &dyn ResponseGenerator| augment_generative(&corpus, generator, &params);
            let (merged, _, stats) = match (&args.fixture, &args.generator_cmd) {
                (Some(fixture), None) => {
                    manifest.input("fixture", fixture.display());
                    run(&ReplayGenerator::load(fixture)?)?
                }
                (None, Some(cmd)) => {
                    manifest.input("generator-cmd", cmd);
                    let generator = CommandGenerator::new(cmd, args.generator_arg.clone());
                    if let Some(record) = &args.record {
                        let recorder = RecordingGenerator::new(generator);
                        let out = run(&recorder)?;
                        recorder.write_fixture(record)?;
                        manifest.output(record.display());
                        out
                    } else {
                        run(&generator)?
                    }
                }
                _ => bail!(
                    "generative augmentation needs exactly one of --fixture or --generator-cmd"
                ),
            };
            (merged, stats)
        }
        other => bail!("unknown augmentation method {other:?} (expected deletion or generative)"),
    };

    for w in &stats.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "augmented: {} new samples ({} skipped), merged size {} ({} duplicates dropped), \
         mean appended tokens {:.1}",
        stats.new_samples,
        stats.skipped,
        stats.merged_size,
        stats.duplicates_removed,
        stats.mean_appended_tokens
    );

    let out_path = args.out.join("augmented.tsv");
    write_snapshot(&merged, &out_path)?;
    manifest.output(out_path.display());
    manifest.write(&args.out.join("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// bilstm | cnn | encoder-classifier | text2text
    #[arg(long)]
    backend: String,
    /// base | small (text2text capacity/batch preset)
    #[arg(long, default_value = "base")]
    size: String,
    /// static embedding table, word-per-line "token v1 ... vD"
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// checkpoint directory to initialize weights from
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// repeat the run N times with seeds seed..seed+N-1
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    warmup_fraction: Option<f64>,
    #[arg(long)]
    task_prefix: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

pub(crate) fn backend_config_from(
    args: &TrainArgs,
    file: &FileConfig,
) -> anyhow::Result<BackendConfig> {
    let kind: BackendKind = args.backend.parse()?;
    let size = match args.size.as_str() {
        "base" => ModelSize::Base,
        "small" => ModelSize::Small,
        other => bail!("unknown size {other:?} (expected base or small)"),
    };
    let mut cfg = BackendConfig::preset_sized(kind, size);
    let t = &file.train;
    cfg.seed = args.seed.or(t.seed).unwrap_or(cfg.seed);
    cfg.epochs = args.epochs.or(t.epochs).unwrap_or(cfg.epochs);
    cfg.batch_size = args.batch_size.or(t.batch_size).unwrap_or(cfg.batch_size);
    cfg.learning_rate = args
        .learning_rate
        .or(t.learning_rate)
        .unwrap_or(cfg.learning_rate);
    cfg.hidden_size = args
        .hidden_size
        .or(t.hidden_size)
        .unwrap_or(cfg.hidden_size);
    cfg.embedding_dim = args
        .embedding_dim
        .or(t.embedding_dim)
        .unwrap_or(cfg.embedding_dim);
    cfg.max_seq_len = args
        .max_seq_len
        .or(t.max_seq_len)
        .unwrap_or(cfg.max_seq_len);
    cfg.dropout = args.dropout.or(t.dropout).unwrap_or(cfg.dropout);
    cfg.warmup_fraction = args
        .warmup_fraction
        .or(t.warmup_fraction)
        .unwrap_or(cfg.warmup_fraction);
    if let Some(prefix) = args.task_prefix.clone().or(t.task_prefix.clone()) {
        cfg.task_prefix = prefix;
    }
    cfg.pretrained_id = args.pretrained.as_ref().map(|p| p.display().to_string());
    Ok(cfg)
}

fn manifest_settings(manifest: &mut RunManifest, cfg: &BackendConfig) {
    manifest
        .setting("backend", cfg.kind)
        .setting("epochs", cfg.epochs)
        .setting("batch-size", cfg.batch_size)
        .setting("learning-rate", cfg.learning_rate)
        .setting("hidden-size", cfg.hidden_size)
        .setting("max-seq-len", cfg.max_seq_len)
        .setting("dropout", cfg.dropout)
        .setting("warmup-fraction", cfg.warmup_fraction)
        .setting("optimizer", "adam(beta1=0.9, beta2=0.999, eps=1e-8)");
    if !cfg.task_prefix.is_empty() {
        manifest.setting("task-prefix", &cfg.task_prefix);
    }
}

pub fn train(args: TrainArgs, file: &FileConfig) -> anyhow::Result<()> {
    let cfg = backend_config_from(&args, file)?;
    let runs = args.runs.or(file.train.runs).unwrap_or(1);
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let train_c = load_snapshot(&args.train)?;
    let dev_c = load_snapshot(&args.dev)?;
    let embeddings = args
        .embeddings
        .as_deref()
        .map(EmbeddingFile::load)
        .transpose()?;
    ensure_dir(&args.out)?;

    let mut manifest = RunManifest::new("train");
    manifest.seed = Some(cfg.seed);
    manifest
        .input("train", args.train.display())
        .input("dev", args.dev.display())
        .setting("runs", runs);
    if let Some(e) = &args.embeddings {
        manifest.input("embeddings", e.display());
    }
    manifest_settings(&mut manifest, &cfg);

    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.seed + i).collect();
    let checkpoints = hsd_core::backends::train_repeated(
        |seed| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = seed;
            build_backend(&run_cfg, &train_c.task, &train_c, embeddings.as_ref())
        },
        &seeds,
        &train_c,
        &dev_c,
        &args.out,
    )?;

    for ckpt in &checkpoints {
        println!(
            "seed {}: best epoch {} (dev loss {:.6}), {} trainable / {} total parameters -> {}",
            ckpt.manifest.run_seed,
            ckpt.manifest.best_epoch,
            ckpt.manifest.best_val_loss,
            ckpt.manifest.trainable_parameters,
            ckpt.manifest.total_parameters,
            ckpt.dir.display()
        );
        manifest.output(ckpt.dir.display());
    }
    manifest.codec = Some(checkpoints[0].manifest.codec.clone());
    manifest.write(&args.out.join("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in", value_name = "SNAPSHOT")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.checkpoint)?;
    let corpus = load_snapshot(&args.input)?;
    let preds = hsd_core::backends::predict(&loaded, &corpus)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    preds.write_file(&args.out)?;
    if let Some(ooc) = preds.ooc_count {
        println!(
            "predicted {} samples ({ooc} out-of-class corrections)",
            preds.predictions.len()
        );
    } else {
        println!("predicted {} samples", preds.predictions.len());
    }
    let mut manifest = RunManifest::new("predict");
    manifest
        .input("checkpoint", args.checkpoint.display())
        .input("corpus", args.input.display())
        .output(args.out.display());
    if let Some(ooc) = preds.ooc_count {
        manifest.setting("ooc-count", ooc);
    }
    manifest.codec = Some(loaded.manifest.codec.clone());
    manifest.write(&args.out.with_extension("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// gold corpus snapshot
    #[arg(long)]
    gold: PathBuf,
    /// prediction file(s); several files are scored and aggregated
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// newline-delimited score list for a two-sample t-test (side A)
    #[arg(long)]
    ttest_a: Option<PathBuf>,
    /// newline-delimited score list for a two-sample t-test (side B)
    #[arg(long)]
    ttest_b: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_scores(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read score list {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .with_context(|| format!("bad score {l:?} in {}", path.display()))
        })
        .collect()
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let gold = load_snapshot(&args.gold)?;
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("evaluate");
    manifest.input("gold", args.gold.display());

    let mut per_run = Vec::new();
    for pred_path in &args.pred {
        let preds = PredictionSet::read_file(pred_path, &gold.task)?;
        let scores = f1_scores(&preds, &gold)?;
        manifest.input("pred", pred_path.display());
        per_run.push((pred_path, preds, scores));
    }

    let (first_path, first_preds, first_scores) = &per_run[0];
    let confusion = confusion_matrix(first_preds, &gold)?;
    let mut report = EvalReport::single_run(first_preds, &gold, first_scores.clone(), confusion);
    if per_run.len() > 1 {
        let pairs: Vec<(f64, f64)> = per_run
            .iter()
            .map(|(_, _, s)| (s.weighted_f1, s.macro_f1))
            .collect();
        let agg = aggregate_runs(&pairs)?;
        report.n_runs = agg.n_runs;
        report.weighted_f1 = agg.mean_weighted;
        report.macro_f1 = agg.mean_macro;
        report.sd_weighted = agg.sd_weighted;
        report.sd_macro = agg.sd_macro;
        println!(
            "aggregated {} runs (per-class table and confusion from {})",
            agg.n_runs,
            first_path.display()
        );
    }
    print!("{}", report.render_table());

    match (&args.ttest_a, &args.ttest_b) {
        (Some(a), Some(b)) => {
            let result = t_test(&read_scores(a)?, &read_scores(b)?)?;
            println!(
                "t-test: t = {:.4}, df = {:.2}, p = {:.6} ({})",
                result.t_statistic,
                result.degrees_of_freedom,
                result.p_value,
                if result.significant {
                    "significant at alpha 0.05"
                } else {
                    "not significant at alpha 0.05"
                }
            );
            manifest.setting("ttest-p", result.p_value);
            manifest.setting("ttest-significant", result.significant);
        }
        (None, None) => {}
        _ => bail!("--ttest-a and --ttest-b must be given together"),
    }

    let report_path = args.out.join("report.toml");
    std::fs::write(&report_path, report.to_toml()?)?;
    std::fs::write(args.out.join("report.txt"), report.render_table())?;
    manifest.output(report_path.display());
    manifest.write(&args.out.join("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// ensemble

#[derive(Args)]
pub struct EnsembleArgs {
    /// dataset descriptor naming the task the members predict
    #[arg(long)]
    descriptor: PathBuf,
    #[arg(long)]
    subtask: String,
    /// member prediction files, in priority order (first breaks ties)
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn ensemble(args: EnsembleArgs) -> anyhow::Result<()> {
    let descriptor = DatasetDescriptor::load(&args.descriptor)?;
    let task = descriptor.task_spec(&args.subtask)?;
    let members: Vec<PredictionSet> = args
        .pred
        .iter()
        .map(|p| PredictionSet::read_file(p, &task))
        .collect::<hsd_core::Result<_>>()?;
    let combined = hsd_core::ensemble::majority_vote(&members)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    combined.write_file(&args.out)?;
    println!(
        "ensemble of {} members over {} samples -> {}",
        members.len(),
        combined.predictions.len(),
        args.out.display()
    );
    let mut manifest = RunManifest::new("ensemble");
    for p in &args.pred {
        manifest.input("pred", p.display());
    }
    manifest
        .setting("provenance", &combined.provenance)
        .output(args.out.display());
    manifest.write(&args.out.with_extension("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// crosstask

#[derive(Args)]
pub struct CrosstaskArgs {
    #[arg(long)]
    source_train: PathBuf,
    #[arg(long)]
    source_dev: PathBuf,
    #[arg(long)]
    target_train: PathBuf,
    #[arg(long)]
    target_dev: PathBuf,
    /// backend settings shared by both phases
    #[command(flatten)]
    train_args: TrainSettings,
    #[arg(long)]
    out: PathBuf,
}

/// Backend flags shared between `train` and `crosstask`.
#[derive(Args)]
pub struct TrainSettings {
    #[arg(long)]
    backend: String,
    #[arg(long, default_value = "base")]
    size: String,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

pub fn crosstask(args: CrosstaskArgs, file: &FileConfig) -> anyhow::Result<()> {
    let t = &args.train_args;
    let kind: BackendKind = t.backend.parse()?;
    let size = match t.size.as_str() {
        "base" => ModelSize::Base,
        "small" => ModelSize::Small,
        other => bail!("unknown size {other:?}"),
    };
    let mut cfg = BackendConfig::preset_sized(kind, size);
    let f = &file.train;
    cfg.seed = t.seed.or(f.seed).unwrap_or(cfg.seed);
    cfg.epochs = t.epochs.or(f.epochs).unwrap_or(cfg.epochs);
    cfg.batch_size = t.batch_size.or(f.batch_size).unwrap_or(cfg.batch_size);
    cfg.learning_rate = t
        .learning_rate
        .or(f.learning_rate)
        .unwrap_or(cfg.learning_rate);
    cfg.hidden_size = t.hidden_size.or(f.hidden_size).unwrap_or(cfg.hidden_size);
    cfg.embedding_dim = t
        .embedding_dim
        .or(f.embedding_dim)
        .unwrap_or(cfg.embedding_dim);
    cfg.max_seq_len = t.max_seq_len.or(f.max_seq_len).unwrap_or(cfg.max_seq_len);
    cfg.dropout = t.dropout.or(f.dropout).unwrap_or(cfg.dropout);

    let source_train = load_snapshot(&args.source_train)?;
    let source_dev = load_snapshot(&args.source_dev)?;
    let target_train = load_snapshot(&args.target_train)?;
    let target_dev = load_snapshot(&args.target_dev)?;
    let embeddings = t
        .embeddings
        .as_deref()
        .map(EmbeddingFile::load)
        .transpose()?;
    ensure_dir(&args.out)?;

    let source_model = build_backend(&cfg, &source_train.task, &source_train, embeddings.as_ref())?;
    let target_model = build_backend(&cfg, &target_train.task, &target_train, embeddings.as_ref())?;
    let ckpt = hsd_core::backends::cross_task_train(
        source_model,
        &source_train,
        &source_dev,
        target_model,
        &target_train,
        &target_dev,
        &args.out,
    )?;
    println!(
        "cross-task checkpoint: best epoch {} (dev loss {:.6}), lineage {} -> {}",
        ckpt.manifest.best_epoch,
        ckpt.manifest.best_val_loss,
        ckpt.manifest.lineage.as_deref().unwrap_or("-"),
        ckpt.dir.display()
    );

    let mut manifest = RunManifest::new("crosstask");
    manifest.seed = Some(cfg.seed);
    manifest
        .input("source-train", args.source_train.display())
        .input("source-dev", args.source_dev.display())
        .input("target-train", args.target_train.display())
        .input("target-dev", args.target_dev.display())
        .setting("backend", cfg.kind)
        .setting("epochs-per-phase", cfg.epochs)
        .output(ckpt.dir.display());
    manifest.codec = Some(ckpt.manifest.codec.clone());
    manifest.write(&args.out.join("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// explain

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in", value_name = "SNAPSHOT")]
    input: PathBuf,
    /// ig | shap
    #[arg(long)]
    method: String,
    /// label rendered red in integrated-gradients reports; defaults to the
    /// first label of the task's label space
    #[arg(long)]
    hate_label: Option<String>,
    /// integration steps (ig)
    #[arg(long)]
    steps: Option<usize>,
    /// predictor-call budget per sample (shap)
    #[arg(long)]
    max_evals: Option<usize>,
    /// token substituted for masked positions (shap)
    #[arg(long)]
    mask_token: Option<String>,
    /// explain at most this many samples
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn explain(args: ExplainArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.checkpoint)?;
    let corpus = load_snapshot(&args.input)?;
    ensure_dir(&args.out)?;
    let limit = args.limit.unwrap_or(corpus.len());
    let samples: Vec<_> = corpus.samples.iter().take(limit).collect();

    let mut manifest = RunManifest::new("explain");
    manifest
        .input("checkpoint", args.checkpoint.display())
        .input("corpus", args.input.display())
        .setting("method", &args.method)
        .setting("samples", samples.len());

    let (attributions, scheme, title) = match args.method.as_str() {
        "ig" => {
            let steps = args.steps.unwrap_or(hsd_core::explain::DEFAULT_STEPS);
            manifest.setting("steps", steps);
            let scorer = ModelScorer::new(&loaded)?;
            let inputs: Vec<(String, Vec<String>)> = samples
                .iter()
                .map(|s| {
                    (
                        s.id.clone(),
                        hsd_core::explain::DifferentiableTextScorer::tokens(&scorer, &s.text),
                    )
                })
                .collect();
            let attributions = integrated_gradients_batch(&scorer, &inputs, steps)
                .into_iter()
                .collect::<hsd_core::Result<Vec<_>>>()?;
            let hate_label = args
                .hate_label
                .clone()
                .unwrap_or_else(|| loaded.model.task.label_space[0].clone());
            manifest.setting("hate-label", &hate_label);
            (
                attributions,
                ColorScheme::IntegratedGradients { hate_label },
                "Integrated-gradients token attributions",
            )
        }
        "shap" => {
            let defaults = ShapConfig::default();
            let shap_cfg = ShapConfig {
                max_evals: args.max_evals,
                mask_token: args.mask_token.clone().unwrap_or(defaults.mask_token),
                seed: args.seed.unwrap_or(defaults.seed),
            };
            manifest.setting("mask-token", &shap_cfg.mask_token);
            let is_t2t = loaded.model.config.kind == BackendKind::Text2Text;
            let mut attributions = Vec::with_capacity(samples.len());
            for s in &samples {
                let predicted = hsd_core::backends::predict_sample(&loaded.model, &s.text);
                let tokens: Vec<String> = s.text.split_whitespace().map(str::to_string).collect();
                let attribution = if is_t2t {
                    let scorer = LabelProbabilityScorer::new(&loaded, &predicted)?;
                    shap_values(&scorer, &s.id, &tokens, &predicted, &shap_cfg)?
                } else {
                    let scorer = ClassProbabilityScorer::new(&loaded, &predicted)?;
                    shap_values(&scorer, &s.id, &tokens, &predicted, &shap_cfg)?
                };
                attributions.push(attribution);
            }
            (
                attributions,
                ColorScheme::Shap,
                "Shapley-value token attributions",
            )
        }
        other => bail!("unknown method {other:?} (expected ig or shap)"),
    };

    let html = render_report(&attributions, &scheme, title);
    let html_path = args.out.join("report.html");
    std::fs::write(&html_path, html)?;
    let tsv_path = args.out.join("attributions.tsv");
    write_attribution_tsv(&attributions, &tsv_path)?;
    println!(
        "explained {} samples -> {} and {}",
        attributions.len(),
        html_path.display(),
        tsv_path.display()
    );
    manifest.output(html_path.display());
    manifest.output(tsv_path.display());
    manifest.write(&args.out.join("manifest.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// audit

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// keep only disagreements with this predicted label
    #[arg(long)]
    filter_pred: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

pub fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let gold = load_snapshot(&args.gold)?;
    let preds = PredictionSet::read_file(&args.pred, &gold.task)?;
    let rows = find_disagreements(&preds, &gold, args.filter_pred.as_deref())?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_audit_file(&rows, &args.out)?;
    println!("{} disagreements -> {}", rows.len(), args.out.display());
    let mut manifest = RunManifest::new("audit");
    manifest
        .input("gold", args.gold.display())
        .input("pred", args.pred.display())
        .output(args.out.display());
    if let Some(filter) = &args.filter_pred {
        manifest.setting("filter-pred", filter);
    }
    manifest.write(&args.out.with_extension("manifest.toml"))?;
    Ok(())
}
