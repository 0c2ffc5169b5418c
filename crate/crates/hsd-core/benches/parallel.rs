//! Rayon-vs-sequential comparison for the data-parallel inner loops. Run
//! with `cargo bench -p hsd-core` (the default `parallel` feature must be
//! on for the comparison to be meaningful).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hsd_core::augment::{boundary_deleted_text, delete_boundary, Lexicon};
use hsd_core::backends::{
    build_backend, load_model, predict, train, BackendConfig, BackendKind, EmbeddingFile,
};
use hsd_core::corpus::{DatasetId, LabeledCorpus, Sample, SplitTag, TaskSpec};
use hsd_core::explain::{integrated_gradients, integrated_gradients_batch, ModelScorer};
use hsd_core::preprocess::{clean, clean_corpus, clean_corpus_sequential};

fn synth_corpus(n: usize) -> LabeledCorpus {
    let task = TaskSpec::new(DatasetId::Hasoc2021, "task_1", &["HOF", "NOT"]);
    let mut corpus = LabeledCorpus::new(task, SplitTag::Train);
    for i in 0..n {
        let text = format!(
            "Check THIS out http://example.com/{i} @user{i} #tag{i} email{i}@test.org \
             192.168.0.{} numbers {} and more words to scan here!!",
            i % 255,
            i * 37
        );
        let label = if i % 2 == 0 { "HOF" } else { "NOT" };
        corpus
            .samples
            .push(Sample::new(format!("s{i}"), text).with_label("task_1", label));
    }
    corpus
}

fn cleaned_corpus(n: usize) -> LabeledCorpus {
    clean_corpus(&synth_corpus(n)).0
}

fn bench_clean(c: &mut Criterion) {
    let corpus = synth_corpus(2000);
    let mut group = c.benchmark_group("clean_corpus");
    group.bench_with_input(
        BenchmarkId::new("parallel", corpus.len()),
        &corpus,
        |b, corpus| {
            b.iter(|| black_box(clean_corpus(corpus)));
        },
    );
    group.bench_with_input(
        BenchmarkId::new("sequential", corpus.len()),
        &corpus,
        |b, corpus| {
            b.iter(|| black_box(clean_corpus_sequential(corpus)));
        },
    );
    group.finish();
}

fn bench_boundary_deletion(c: &mut Criterion) {
    let corpus = cleaned_corpus(5000);
    let lexicon = Lexicon::from_words(["tag", "numbers", "zorg"]);
    let mut group = c.benchmark_group("delete_boundary");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(delete_boundary(&corpus, &lexicon)));
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let variants: Vec<Option<String>> = corpus
                .samples
                .iter()
                .map(|s| boundary_deleted_text(&s.text, &lexicon))
                .collect();
            black_box(variants)
        });
    });
    group.finish();
}

fn trained_checkpoint(dir: &std::path::Path) -> hsd_core::backends::LoadedModel {
    let corpus = cleaned_corpus(64);
    let (train_c, dev_c) = corpus.split_dev(0.2, 1).unwrap();
    let mut cfg = BackendConfig::preset(BackendKind::Bilstm);
    cfg.embedding_dim = 16;
    cfg.hidden_size = 16;
    cfg.epochs = 1;
    cfg.dropout = 0.0;
    let file = EmbeddingFile {
        dim: 16,
        vectors: Default::default(),
    };
    let model = build_backend(&cfg, &train_c.task.clone(), &train_c, Some(&file)).unwrap();
    let ckpt = train(model, &train_c, &dev_c, dir).unwrap();
    load_model(&ckpt.dir).unwrap()
}

fn bench_predict(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let loaded = trained_checkpoint(dir.path());
    let test_c = cleaned_corpus(256);
    let mut group = c.benchmark_group("predict_bilstm");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(predict(&loaded, &test_c).unwrap()));
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let labels: Vec<String> = test_c
                .samples
                .iter()
                .map(|s| hsd_core::backends::predict_sample(&loaded.model, &s.text))
                .collect();
            black_box(labels)
        });
    });
    group.finish();
}

fn bench_integrated_gradients(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let loaded = trained_checkpoint(dir.path());
    let scorer = ModelScorer::new(&loaded).unwrap();
    let test_c = cleaned_corpus(32);
    let samples: Vec<(String, Vec<String>)> = test_c
        .samples
        .iter()
        .map(|s| {
            (
                s.id.clone(),
                s.text.split_whitespace().map(str::to_string).collect(),
            )
        })
        .collect();
    let mut group = c.benchmark_group("integrated_gradients");
    group.sample_size(10);
    group.bench_function("parallel_batch", |b| {
        b.iter(|| black_box(integrated_gradients_batch(&scorer, &samples, 16)));
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let out: Vec<_> = samples
                .iter()
                .map(|(id, tokens)| integrated_gradients(&scorer, id, tokens, 16, None))
                .collect();
            black_box(out)
        });
    });
    group.finish();
}

fn bench_preprocess_kernel(c: &mut Criterion) {
    let text = "SO EXCITED to get my CovidVaccine at http://vaccines.example/now \
                @clinic #covid19 42 days 192.168.1.1 mail@example.com !!";
    c.bench_function("clean_single", |b| b.iter(|| black_box(clean(text))));
}

criterion_group!(
    benches,
    bench_clean,
    bench_boundary_deletion,
    bench_predict,
    bench_integrated_gradients,
    bench_preprocess_kernel
);
criterion_main!(benches);
