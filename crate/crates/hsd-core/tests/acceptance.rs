//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line when it holds. Desk-scale criteria run by default; the
//! hardware-gated reproduction tests are `#[ignore]`d and activate through
//! environment variables pointing at the real datasets.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use hsd_core::augment::{
    augment_generative, delete_boundary, DecodingParams, Lexicon, ReplayGenerator,
};
use hsd_core::backends::{
    build_backend, gradient_check_max_rel_err, load_model, predict, train, BackendConfig,
    BackendKind, EmbeddingFile, PredictionSet,
};
use hsd_core::corpus::{DatasetId, LabeledCorpus, Sample, SplitTag, TaskSpec};
use hsd_core::ensemble::majority_vote;
use hsd_core::evaluate::{f1_scores, t_test};
use hsd_core::explain::{integrated_gradients, shap_values, DifferentiableTextScorer, ShapConfig};
use hsd_core::labelcodec::build_codec;
use hsd_core::preprocess::clean;
use hsd_core::tensor::Mat;

fn binary_task() -> TaskSpec {
    TaskSpec::new(DatasetId::Hasoc2021, "task_1", &["HOF", "NOT"])
}

fn corpus_of(labels_and_texts: &[(&str, String)]) -> LabeledCorpus {
    let mut corpus = LabeledCorpus::new(binary_task(), SplitTag::Train);
    for (i, (label, text)) in labels_and_texts.iter().enumerate() {
        corpus
            .samples
            .push(Sample::new(format!("s{i}"), text.clone()).with_label("task_1", label));
    }
    corpus
}

// ---------------------------------------------------------------------------
// Criterion: metric oracle

/// Independent brute-force scorer: full confusion matrix by nested label
/// loops, then textbook per-class precision/recall/F1.
fn brute_force_f1(classes: &[String], gold: &[String], pred: &[String]) -> (f64, f64) {
    let k = classes.len();
    let mut matrix = vec![vec![0usize; k]; k];
    for (g, p) in gold.iter().zip(pred) {
        let gi = classes.iter().position(|c| c == g).unwrap();
        let pi = classes.iter().position(|c| c == p).unwrap();
        matrix[gi][pi] += 1;
    }
    let n: usize = gold.len();
    let mut macro_sum = 0.0;
    let mut weighted_sum = 0.0;
    for (ci, row) in matrix.iter().enumerate() {
        let tp = row[ci] as f64;
        let gold_c: usize = row.iter().sum();
        let pred_c: usize = (0..k).map(|gi| matrix[gi][ci]).sum();
        let precision = if pred_c > 0 { tp / pred_c as f64 } else { 0.0 };
        let recall = if gold_c > 0 { tp / gold_c as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        macro_sum += f1;
        weighted_sum += f1 * gold_c as f64;
    }
    (
        100.0 * weighted_sum / n as f64,
        100.0 * macro_sum / k as f64,
    )
}

#[test]
fn acceptance_metric_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let class_pool = ["A", "B", "C", "D", "E"];
    for case in 0..10_000 {
        let k = rng.random_range(2..=5usize);
        let classes: Vec<String> = class_pool[..k].iter().map(|s| s.to_string()).collect();
        let n = rng.random_range(1..=60usize);
        let gold: Vec<String> = (0..n)
            .map(|_| classes[rng.random_range(0..k)].clone())
            .collect();
        let pred: Vec<String> = (0..n)
            .map(|_| classes[rng.random_range(0..k)].clone())
            .collect();

        let class_refs: Vec<&str> = classes.iter().map(String::as_str).collect();
        let task = TaskSpec::new(DatasetId::Hasoc2021, "t", &class_refs);
        let mut corpus = LabeledCorpus::new(task.clone(), SplitTag::Test);
        let mut predictions = BTreeMap::new();
        for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
            corpus
                .samples
                .push(Sample::new(format!("s{i}"), "x").with_label("t", g));
            predictions.insert(format!("s{i}"), p.clone());
        }
        let pset = PredictionSet {
            task,
            predictions,
            provenance: "oracle-test".to_string(),
            ooc_count: None,
        };
        let scores = f1_scores(&pset, &corpus).unwrap();
        let (expect_weighted, expect_macro) = brute_force_f1(&classes, &gold, &pred);
        assert!(
            (scores.weighted_f1 - expect_weighted).abs() < 1e-9,
            "case {case}: weighted {} vs oracle {expect_weighted}",
            scores.weighted_f1
        );
        assert!(
            (scores.macro_f1 - expect_macro).abs() < 1e-9,
            "case {case}: macro {} vs oracle {expect_macro}",
            scores.macro_f1
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!("acceptance PASS: metric oracle (10,000 cases, {elapsed:?})");
}

// ---------------------------------------------------------------------------
// Criterion: OOC totality fuzz

fn random_unicode(rng: &mut ChaCha12Rng, max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| loop {
            let c = rng.random_range(0u32..=0x10FFFF);
            if let Some(c) = char::from_u32(c) {
                break c;
            }
        })
        .collect()
}

#[test]
fn acceptance_ooc_totality_fuzz() {
    let space = vec!["HOF".to_string(), "NOT".to_string(), "OTH".to_string()];
    let counts: BTreeMap<String, usize> = [
        ("HOF".to_string(), 10),
        ("NOT".to_string(), 30),
        ("OTH".to_string(), 5),
    ]
    .into_iter()
    .collect();
    let codec = build_codec(&space, &counts).unwrap();
    let tokens = ["0", "1", "2"];

    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let mut expected_ooc = 0u64;
    for i in 0..10_000 {
        let raw = match i % 4 {
            // plain fuzz
            0 | 1 => random_unicode(&mut rng, 12),
            // valid tokens, possibly padded
            2 => format!("  {}\t", tokens[rng.random_range(0..3)]),
            _ => tokens[rng.random_range(0..3)].to_string(),
        };
        let in_space = tokens.contains(&raw.trim());
        if !in_space {
            expected_ooc += 1;
        }
        let label = codec.decode_prediction(&raw);
        assert!(space.contains(&label), "decoded {label:?} for {raw:?}");
        if in_space {
            let token = codec.encode_label(&label).unwrap();
            assert_eq!(token, raw.trim(), "round trip broke for {raw:?}");
        } else {
            assert_eq!(label, "NOT", "majority fallback");
        }
    }
    assert_eq!(codec.ooc_count(), expected_ooc, "OOC counter must be exact");
    // round trip over the whole label space
    for label in &space {
        let token = codec.encode_label(label).unwrap().to_string();
        assert_eq!(&codec.decode_prediction(&token), label);
    }
    println!("acceptance PASS: OOC totality fuzz (10,000 strings, {expected_ooc} corrected)");
}

// ---------------------------------------------------------------------------
// Criterion: preprocessing conformance

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

#[test]
fn acceptance_preprocessing_conformance() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/preprocess_golden.tsv"
    );
    let text = std::fs::read_to_string(path).expect("golden fixture present");
    let mut pairs = 0usize;
    let mut saw_table_pair = false;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with("##") || line.is_empty() {
            continue;
        }
        let (input, expected) = line
            .split_once('\t')
            .unwrap_or_else(|| panic!("fixture line {} is not a pair", i + 1));
        let input = unescape(input);
        let expected = unescape(expected);
        let got = clean(&input);
        assert_eq!(
            got,
            expected,
            "byte-exact mismatch at fixture line {}",
            i + 1
        );
        if expected == "so excited to get my covidvaccine i hate you covid" {
            saw_table_pair = true;
        }
        pairs += 1;
    }
    assert!(pairs >= 50, "golden fixture has only {pairs} pairs");
    assert!(saw_table_pair, "fixture must include the covidvaccine pair");

    // idempotence fuzz
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let s = random_unicode(&mut rng, 40);
        let once = clean(&s);
        assert_eq!(clean(&once), once, "idempotence broke for {s:?}");
    }
    println!(
        "acceptance PASS: preprocessing conformance ({pairs} golden pairs + idempotence fuzz)"
    );
}

// ---------------------------------------------------------------------------
// Criterion: augmentation invariants

#[test]
fn acceptance_augmentation_invariants() {
    let lexicon = Lexicon::from_words(["zorg", "blarg", "gork"]);
    let filler = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];

    // 500 distinct samples; lexicon tokens appear at assorted positions
    let mut rows: Vec<(&str, String)> = Vec::new();
    for i in 0..500 {
        let label = if i % 2 == 0 { "HOF" } else { "NOT" };
        let mut words = vec![
            filler[i % filler.len()].to_string(),
            format!("w{i}"),
            filler[(i / 6) % filler.len()].to_string(),
            format!("x{i}"),
        ];
        match i % 5 {
            0 => words.insert(0, "zorg".to_string()),
            1 => words.push("blarg".to_string()),
            2 => words.insert(2, "gork".to_string()),
            _ => {}
        }
        rows.push((label, words.join(" ")));
    }
    let corpus = corpus_of(&rows);
    assert_eq!(corpus.len(), 500);

    // generative augmentation via a replay generator covering every prompt
    let responses: Vec<(String, String)> = corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (
                s.text.clone(),
                format!("reply {} about {}", i, filler[(i * 7) % filler.len()]),
            )
        })
        .collect();
    let generator =
        ReplayGenerator::from_pairs(responses.iter().map(|(p, r)| (p.as_str(), r.as_str())));
    let (merged, records, stats) =
        augment_generative(&corpus, &generator, &DecodingParams::default()).unwrap();

    assert_eq!(
        stats.new_samples, 500,
        "pre-dedup doubling: one new sample per input"
    );
    assert_eq!(stats.skipped, 0);
    assert_eq!(
        merged.len(),
        1000,
        "no collisions in this corpus, so the merge doubles"
    );
    for (origin, record) in corpus.samples.iter().zip(&records) {
        assert_eq!(
            record.label,
            origin.label("task_1").unwrap(),
            "label preserved"
        );
        assert!(
            record.text.starts_with(&origin.text),
            "origin text is a prefix"
        );
        let augmented_tokens: std::collections::HashSet<&str> =
            record.text.split_whitespace().collect();
        for token in origin.text.split_whitespace() {
            if lexicon.contains(token) {
                assert!(
                    augmented_tokens.contains(token),
                    "lexicon token {token:?} lost from {:?}",
                    record.text
                );
            }
        }
    }
    for original in &corpus.samples {
        assert!(
            merged.samples.contains(original),
            "original corpus is a subset"
        );
    }

    // boundary deletion never removes a lexicon token
    let (_, deletion_records, _) = delete_boundary(&corpus, &lexicon);
    for (origin, record) in corpus.samples.iter().zip(&deletion_records) {
        let kept: std::collections::HashSet<&str> = record.text.split_whitespace().collect();
        for token in origin.text.split_whitespace() {
            if lexicon.contains(token) {
                assert!(
                    kept.contains(token),
                    "deletion removed lexicon token {token:?} from {:?}",
                    origin.text
                );
            }
        }
    }
    println!("acceptance PASS: augmentation invariants (500-sample corpus)");
}

// ---------------------------------------------------------------------------
// Criterion: integrated gradients

struct LinearScorer {
    weights: Mat,
}

impl DifferentiableTextScorer for LinearScorer {
    fn tokens(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    fn embed_tokens(&self, tokens: &[String]) -> Mat {
        Mat::from_shape_fn((tokens.len(), self.weights.ncols()), |(r, c)| {
            0.4 * (r as f64 + 1.0) - 0.15 * c as f64
        })
    }

    fn score_and_grad(&self, embedded: &Mat, _class: usize) -> (f64, Mat) {
        ((embedded * &self.weights).sum(), self.weights.clone())
    }

    fn predict_class(&self, _embedded: &Mat) -> usize {
        0
    }
}

fn smoke_embeddings(dim: usize) -> EmbeddingFile {
    EmbeddingFile {
        dim,
        vectors: std::collections::HashMap::new(),
    }
}

fn separable_corpus(n: usize) -> LabeledCorpus {
    let hate_words = ["zorg", "gork", "vile", "creep"];
    let kind_words = ["sun", "flower", "calm", "gentle"];
    let rows: Vec<(&str, String)> = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                (
                    "HOF",
                    format!(
                        "{} {} insult w{i}",
                        hate_words[i % 4],
                        hate_words[(i / 4) % 4]
                    ),
                )
            } else {
                (
                    "NOT",
                    format!(
                        "{} {} peace w{i}",
                        kind_words[i % 4],
                        kind_words[(i / 4) % 4]
                    ),
                )
            }
        })
        .collect();
    corpus_of(&rows)
}

#[test]
fn acceptance_integrated_gradients() {
    // closed form on a linear scorer: exact for any step count
    let weights = Mat::from_shape_fn((4, 6), |(r, c)| 0.3 * r as f64 - 0.2 * c as f64 + 0.05);
    let scorer = LinearScorer {
        weights: weights.clone(),
    };
    let tokens: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
    let input = scorer.embed_tokens(&tokens);
    for steps in [1usize, 7, 50] {
        let attr = integrated_gradients(&scorer, "lin", &tokens, steps, None).unwrap();
        assert!(attr.gap <= 1e-9, "linear gap {} at {steps} steps", attr.gap);
        for (i, score) in attr.scores.iter().enumerate() {
            let expected: f64 = (0..6).map(|c| weights[(i, c)] * input[(i, c)]).sum();
            assert!(
                (score - expected).abs() <= 1e-9,
                "token {i}: {score} vs {expected}"
            );
        }
    }

    // trained recurrent model as the nonlinear fixture
    let corpus = separable_corpus(20);
    let mut cfg = BackendConfig::preset(BackendKind::Bilstm);
    cfg.embedding_dim = 12;
    cfg.hidden_size = 10;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    cfg.learning_rate = 5e-3;
    cfg.dropout = 0.0;
    cfg.seed = 3;
    let model = build_backend(&cfg, &binary_task(), &corpus, Some(&smoke_embeddings(12))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train(model, &corpus, &corpus, dir.path()).unwrap();
    let loaded = load_model(&ckpt.dir).unwrap();
    let scorer = hsd_core::explain::ModelScorer::new(&loaded).unwrap();

    let text = "zorg gork insult w0";
    let tokens = scorer.tokens(text);
    let embedded = scorer.embed_tokens(&tokens);
    let class = scorer.predict_class(&embedded);
    let f_input = scorer.score_and_grad(&embedded, class).0;
    let f_baseline = scorer
        .score_and_grad(&Mat::zeros(embedded.raw_dim()), class)
        .0;
    let denom = (f_input - f_baseline).abs();
    assert!(denom > 1e-3, "degenerate fixture: |F(x)-F(b)| = {denom}");

    let coarse = integrated_gradients(&scorer, "x", &tokens, 1, None).unwrap();
    let mid = integrated_gradients(&scorer, "x", &tokens, 50, None).unwrap();
    let fine = integrated_gradients(&scorer, "x", &tokens, 500, None).unwrap();
    assert!(
        mid.gap <= 1e-3 * denom,
        "completeness gap {} above 1e-3 * {denom} at 50 steps",
        mid.gap
    );
    assert!(
        fine.gap <= coarse.gap,
        "refinement: {} vs {}",
        fine.gap,
        coarse.gap
    );
    println!(
        "acceptance PASS: integrated gradients (linear exact; gap {:.3e} <= 1e-3*{:.3e} at 50 steps)",
        mid.gap, denom
    );
}

// ---------------------------------------------------------------------------
// Criterion: Shapley values

fn interacting_predictor(tokens: &[String]) -> f64 {
    let has = |w: &str| tokens.iter().any(|t| t == w);
    let mut v = 0.0;
    if has("a0") {
        v += 1.0;
    }
    if has("a1") && has("a2") {
        v += 2.5;
    }
    if has("a3") && !has("a0") {
        v -= 0.8;
    }
    if has("a4") {
        v += 0.3;
    }
    let present = tokens.iter().filter(|t| t.starts_with('a')).count();
    v + 0.05 * (present * present) as f64
}

/// Independent oracle: the permutation form of the definition, enumerating
/// all n! orders over cached coalition values.
fn permutation_oracle(n: usize, value: &dyn Fn(u32) -> f64) -> Vec<f64> {
    fn permute(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }
    let cached: Vec<f64> = (0..(1u32 << n)).map(value).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut scores = vec![0.0f64; n];
    let mut count = 0usize;
    permute(&mut order, 0, &mut |perm| {
        count += 1;
        let mut mask = 0u32;
        for &tok in perm {
            let before = cached[mask as usize];
            mask |= 1 << tok;
            scores[tok] += cached[mask as usize] - before;
        }
    });
    scores.iter().map(|s| s / count as f64).collect()
}

#[test]
fn acceptance_shap() {
    // n = 8: implementation vs the full permutation-definition oracle
    let tokens: Vec<String> = (0..8).map(|i| format!("a{i}")).collect();
    let attr = shap_values(
        &interacting_predictor,
        "s8",
        &tokens,
        "HOF",
        &ShapConfig::default(),
    )
    .unwrap();
    let token_view = tokens.clone();
    let coalition_value = move |mask: u32| {
        let masked: Vec<String> = token_view
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if (mask >> i) & 1 == 1 {
                    t.clone()
                } else {
                    "<mask>".to_string()
                }
            })
            .collect();
        interacting_predictor(&masked)
    };
    let oracle = permutation_oracle(8, &coalition_value);
    let scale = oracle.iter().map(|s| s.abs()).fold(0.0f64, f64::max);
    for (i, (got, want)) in attr.scores.iter().zip(&oracle).enumerate() {
        assert!(
            (got - want).abs() <= 0.05 * scale.max(1e-9),
            "token {i}: {got} vs oracle {want} exceeds 5% of {scale}"
        );
        // under full enumeration the match is in fact exact
        assert!((got - want).abs() <= 1e-9, "token {i}: {got} vs {want}");
    }

    // n = 10: efficiency against the enumeration oracle's identity
    let tokens10: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
    let attr10 = shap_values(
        &interacting_predictor,
        "s10",
        &tokens10,
        "HOF",
        &ShapConfig::default(),
    )
    .unwrap();
    let full = interacting_predictor(&tokens10);
    let masked: Vec<String> = tokens10.iter().map(|_| "<mask>".to_string()).collect();
    let empty = interacting_predictor(&masked);
    assert!(
        (attr10.scores.iter().sum::<f64>() - (full - empty)).abs() <= 1e-9,
        "efficiency violated at n=10"
    );
    assert!(attr10.gap <= 1e-9);

    // symmetry and null player, exact under enumeration
    let sym_predictor = |tokens: &[String]| {
        let c = tokens.iter().filter(|t| *t == "x" || *t == "y").count() as f64;
        c * c * 0.5
    };
    let sym_tokens: Vec<String> = ["x", "y", "pad", "null"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let sym = shap_values(
        &sym_predictor,
        "sym",
        &sym_tokens,
        "p",
        &ShapConfig::default(),
    )
    .unwrap();
    assert!((sym.scores[0] - sym.scores[1]).abs() <= 1e-12, "symmetry");
    assert!(sym.scores[3].abs() <= 1e-12, "null player");

    // forced sampling path: exact for additive predictors within 5%
    let additive = |tokens: &[String]| {
        tokens
            .iter()
            .map(|t| match t.as_str() {
                "a0" => 1.0,
                "a1" => -2.0,
                "a2" => 0.5,
                _ => 0.0,
            })
            .sum::<f64>()
    };
    let tokens12: Vec<String> = (0..12).map(|i| format!("a{i}")).collect();
    let sampling_cfg = ShapConfig {
        max_evals: Some(500), // below 2^12, so the sampler runs
        seed: 5,
        ..ShapConfig::default()
    };
    let sampled = shap_values(&additive, "s12", &tokens12, "p", &sampling_cfg).unwrap();
    let expected = [1.0, -2.0, 0.5];
    let scale = 2.0f64;
    for (i, want) in expected.iter().enumerate() {
        assert!(
            (sampled.scores[i] - want).abs() <= 0.05 * scale,
            "sampled token {i}: {} vs {want}",
            sampled.scores[i]
        );
    }
    println!("acceptance PASS: Shapley values (enumeration oracle n=8/10, properties, sampling)");
}

// ---------------------------------------------------------------------------
// Criterion: ensemble

#[test]
fn acceptance_ensemble() {
    let task = binary_task();
    let ids: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
    // all 8 binary three-voter patterns at once, one pattern per sample id
    let member = |voter: usize| -> PredictionSet {
        let predictions: BTreeMap<String, String> = ids
            .iter()
            .enumerate()
            .map(|(pattern, id)| {
                let vote = if (pattern >> voter) & 1 == 1 {
                    "HOF"
                } else {
                    "NOT"
                };
                (id.clone(), vote.to_string())
            })
            .collect();
        PredictionSet {
            task: task.clone(),
            predictions,
            provenance: format!("m{voter}"),
            ooc_count: None,
        }
    };
    let members = [member(0), member(1), member(2)];
    let combined = majority_vote(&members).unwrap();
    for (pattern, id) in ids.iter().enumerate() {
        let hof_votes = (0..3).filter(|v| (pattern >> v) & 1 == 1).count();
        let mode = if hof_votes >= 2 { "HOF" } else { "NOT" };
        assert_eq!(&combined.predictions[id], mode, "pattern {pattern:03b}");
    }

    // unanimity
    let unanimous = [member(0), member(0), member(0)];
    let out = majority_vote(&unanimous).unwrap();
    assert_eq!(out.predictions, members[0].predictions);

    // permutation symmetry for the odd binary ensemble
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        let reordered: Vec<PredictionSet> = perm.iter().map(|&i| members[i].clone()).collect();
        assert_eq!(
            majority_vote(&reordered).unwrap().predictions,
            combined.predictions
        );
    }
    println!("acceptance PASS: ensemble (8 vote patterns = mode, unanimity, symmetry)");
}

// ---------------------------------------------------------------------------
// Criterion: training smoke

#[test]
fn acceptance_training_smoke() {
    let started = Instant::now();
    let slice = separable_corpus(50);
    let mut cfg = BackendConfig::preset(BackendKind::Bilstm);
    cfg.embedding_dim = 24;
    cfg.hidden_size = 32;
    cfg.epochs = 6;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    cfg.dropout = 0.5;
    cfg.seed = 11;
    let model = build_backend(&cfg, &binary_task(), &slice, Some(&smoke_embeddings(24))).unwrap();

    // analytic vs central finite differences on a 5-sample batch
    let batch: Vec<&Sample> = slice.samples.iter().take(5).collect();
    let err =
        gradient_check_max_rel_err(&model, &batch, |name| name.starts_with("head."), 128).unwrap();
    assert!(err < 1e-4, "head gradient relative error {err}");
    let err_lstm =
        gradient_check_max_rel_err(&model, &batch, |name| name.starts_with("lstm1.fwd"), 24)
            .unwrap();
    assert!(
        err_lstm < 1e-4,
        "recurrent gradient relative error {err_lstm}"
    );

    let dir = tempfile::tempdir().unwrap();
    let ckpt = train(model, &slice, &slice, dir.path()).unwrap();

    // checkpoint selection is the argmin of the recorded dev-loss curve
    let argmin = ckpt
        .manifest
        .dev_losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i + 1)
        .unwrap();
    assert_eq!(ckpt.manifest.best_epoch, argmin);
    assert_eq!(ckpt.manifest.dev_losses.len(), 6, "exactly six epochs");

    // overfit check: train-set macro F1
    let loaded = load_model(&ckpt.dir).unwrap();
    let preds = predict(&loaded, &slice).unwrap();
    let scores = f1_scores(&preds, &slice).unwrap();
    assert!(
        scores.macro_f1 >= 95.0,
        "train macro F1 {:.2} below 95",
        scores.macro_f1
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}");
    println!(
        "acceptance PASS: training smoke (macro F1 {:.2}, grad err {err:.2e}, {elapsed:?})",
        scores.macro_f1
    );
}

// ---------------------------------------------------------------------------
// Criterion: t-test vs reference oracle

mod t_oracle {
    /// Lanczos log-gamma, independent of the production path.
    fn ln_gamma(x: f64) -> f64 {
        const COEFFS: [f64; 8] = [
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut acc = 0.999_999_999_999_809_9;
        for (i, c) in COEFFS.iter().enumerate() {
            acc += c / (x + i as f64 + 1.0);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }

    fn t_density(x: f64, df: f64) -> f64 {
        let log_norm = ln_gamma((df + 1.0) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        (log_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
    }

    fn simpson(df: f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (fa, fb, fm) = (t_density(a, df), t_density(b, df), t_density(m, df));
        let flm = t_density(0.5 * (a + m), df);
        let frm = t_density(0.5 * (m + b), df);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(df, a, m, eps / 2.0, depth - 1) + simpson(df, m, b, eps / 2.0, depth - 1)
        }
    }

    /// Two-sided p for Welch's statistic by quadrature of the t density.
    pub fn two_sided_p(t: f64, df: f64) -> f64 {
        let t = t.abs();
        if t == 0.0 {
            return 1.0;
        }
        let upper = t.min(1e4);
        let integral = simpson(df, 0.0, upper, 1e-12, 48);
        (1.0 - 2.0 * integral).clamp(0.0, 1.0)
    }

    /// Welch statistic and degrees of freedom, recomputed from scratch.
    pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64) {
        let na = a.len() as f64;
        let nb = b.len() as f64;
        let ma = a.iter().sum::<f64>() / na;
        let mb = b.iter().sum::<f64>() / nb;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
        let se2 = va / na + vb / nb;
        let t = (ma - mb) / se2.sqrt();
        let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
        (t, df)
    }
}

#[test]
fn acceptance_t_test_oracle() {
    // identical samples: zero statistic, p = 1
    let same = t_test(&[91.0, 91.2, 91.4], &[91.0, 91.2, 91.4]).unwrap();
    assert_eq!(same.p_value, 1.0);

    let mut rng = ChaCha12Rng::seed_from_u64(314);
    for case in 0..100 {
        let na = rng.random_range(2..=12usize);
        let nb = rng.random_range(2..=12usize);
        let shift = rng.random_range(-3.0..3.0);
        let a: Vec<f64> = (0..na)
            .map(|_| 90.0 + rng.random_range(-2.0..2.0))
            .collect();
        let b: Vec<f64> = (0..nb)
            .map(|_| 90.0 + shift + rng.random_range(-2.0..2.0))
            .collect();
        let got = t_test(&a, &b).unwrap();
        let (t_ref, df_ref) = t_oracle::welch(&a, &b);
        let p_ref = t_oracle::two_sided_p(t_ref, df_ref);
        assert!(
            (got.p_value - p_ref).abs() < 1e-6,
            "case {case}: p {} vs oracle {p_ref} (t {t_ref}, df {df_ref})",
            got.p_value
        );
        assert!((got.t_statistic - t_ref).abs() < 1e-9);
    }
    println!("acceptance PASS: t-test oracle (100 random pairs within 1e-6)");
}

// ---------------------------------------------------------------------------
// Hardware-gated reproduction criteria. These need the public datasets,
// serious training capacity, and (for augmentation) a dialogue-model
// fixture; they assert the published numbers at the stated tolerance and
// are ignored unless explicitly requested:
//
//   HSD_HASOC2020_TRAIN=... HSD_HASOC2020_TEST=... \
//   cargo test -p hsd-core --test acceptance -- --ignored
//
// The bundled backends are desk-scale CPU architectures, not the original
// pretrained models, so these gates are expected to need matching capacity
// to pass.

fn env_corpus(var: &str, descriptor: &str, subtask: &str, split: SplitTag) -> LabeledCorpus {
    let path = std::env::var(var)
        .unwrap_or_else(|_| panic!("set {var} to run hardware-gated acceptance tests"));
    let repo = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let descriptor =
        hsd_core::corpus::DatasetDescriptor::load(&repo.join("descriptors").join(descriptor))
            .unwrap();
    let task = descriptor.task_spec(subtask).unwrap();
    let (corpus, _) = hsd_core::corpus::load_dataset(
        std::path::Path::new(&path),
        &task,
        &descriptor.column_map(),
        split,
    )
    .unwrap();
    let (corpus, _) = corpus.drop_invalid(subtask).unwrap();
    hsd_core::preprocess::clean_corpus(&corpus).0
}

fn mean_macro_f1_over_seeds(
    train_c: &LabeledCorpus,
    dev_c: &LabeledCorpus,
    test_c: &LabeledCorpus,
    seeds: &[u64],
    out: &std::path::Path,
) -> f64 {
    let mut cfg = BackendConfig::preset(BackendKind::Text2Text);
    cfg.task_prefix = "classification ".to_string();
    let ckpts = hsd_core::backends::train_repeated(
        |seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            build_backend(&c, &train_c.task, train_c, None)
        },
        seeds,
        train_c,
        dev_c,
        out,
    )
    .unwrap();
    let mut total = 0.0;
    for ckpt in &ckpts {
        let loaded = load_model(&ckpt.dir).unwrap();
        let preds = predict(&loaded, test_c).unwrap();
        total += f1_scores(&preds, test_c).unwrap().macro_f1;
    }
    total / seeds.len() as f64
}

#[test]
#[ignore = "hardware-gated: needs the HASOC 2020 dataset and training capacity"]
fn acceptance_hw_hasoc2020_text2text() {
    let full_train = env_corpus(
        "HSD_HASOC2020_TRAIN",
        "hasoc2020.toml",
        "task_1",
        SplitTag::Train,
    );
    let test_c = env_corpus(
        "HSD_HASOC2020_TEST",
        "hasoc2020.toml",
        "task_1",
        SplitTag::Test,
    );
    let (train_c, dev_c) = full_train.split_dev(0.10, 42).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mean = mean_macro_f1_over_seeds(&train_c, &dev_c, &test_c, &[42, 43, 44], dir.path());
    assert!(
        (mean - 91.12).abs() <= 3.0,
        "mean test macro F1 {mean:.2} outside 91.12 +/- 3.0"
    );
    println!("acceptance PASS: hardware-gated HASOC 2020 A text2text (mean {mean:.2})");
}

#[test]
#[ignore = "hardware-gated: needs OLID and HASOC 2020 datasets and training capacity"]
fn acceptance_hw_cross_task_olid_to_hasoc2020() {
    let olid_train = env_corpus(
        "HSD_OLID_TRAIN",
        "olid2019.toml",
        "subtask_a",
        SplitTag::Train,
    );
    let hasoc_train = env_corpus(
        "HSD_HASOC2020_TRAIN",
        "hasoc2020.toml",
        "task_1",
        SplitTag::Train,
    );
    let hasoc_test = env_corpus(
        "HSD_HASOC2020_TEST",
        "hasoc2020.toml",
        "task_1",
        SplitTag::Test,
    );
    let (src_train, src_dev) = olid_train.split_dev(0.10, 42).unwrap();
    let (tgt_train, tgt_dev) = hasoc_train.split_dev(0.10, 42).unwrap();

    let mut cfg = BackendConfig::preset(BackendKind::Text2Text);
    cfg.task_prefix = "classification ".to_string();
    let dir = tempfile::tempdir().unwrap();

    let direct_mean = mean_macro_f1_over_seeds(
        &tgt_train,
        &tgt_dev,
        &hasoc_test,
        &[42, 43, 44],
        &dir.path().join("direct"),
    );

    let mut total = 0.0;
    for seed in [42u64, 43, 44] {
        let mut c = cfg.clone();
        c.seed = seed;
        let source_model = build_backend(&c, &src_train.task, &src_train, None).unwrap();
        let target_model = build_backend(&c, &tgt_train.task, &tgt_train, None).unwrap();
        let ckpt = hsd_core::backends::cross_task_train(
            source_model,
            &src_train,
            &src_dev,
            target_model,
            &tgt_train,
            &tgt_dev,
            &dir.path().join(format!("xtask-{seed}")),
        )
        .unwrap();
        let loaded = load_model(&ckpt.dir).unwrap();
        let preds = predict(&loaded, &hasoc_test).unwrap();
        total += f1_scores(&preds, &hasoc_test).unwrap().macro_f1;
    }
    let cross_mean = total / 3.0;
    assert!(
        (cross_mean - 91.73).abs() <= 3.0,
        "cross-task mean {cross_mean:.2} outside 91.73 +/- 3.0"
    );
    assert!(
        cross_mean > direct_mean,
        "cross-task {cross_mean:.2} does not exceed direct {direct_mean:.2}"
    );
    println!(
        "acceptance PASS: hardware-gated cross-task (cross {cross_mean:.2} > direct {direct_mean:.2})"
    );
}

#[test]
#[ignore = "hardware-gated: needs the HASOC 2021 dataset and a generation fixture"]
fn acceptance_hw_generative_augmentation_direction() {
    let full_train = env_corpus(
        "HSD_HASOC2021_TRAIN",
        "hasoc2021.toml",
        "task_1",
        SplitTag::Train,
    );
    let test_c = env_corpus(
        "HSD_HASOC2021_TEST",
        "hasoc2021.toml",
        "task_1",
        SplitTag::Test,
    );
    let fixture = std::env::var("HSD_GEN_FIXTURE")
        .expect("set HSD_GEN_FIXTURE to a recorded response fixture covering the training set");
    let (train_c, dev_c) = full_train.split_dev(0.10, 42).unwrap();

    let generator = ReplayGenerator::load(std::path::Path::new(&fixture)).unwrap();
    let (augmented, _, _) =
        augment_generative(&train_c, &generator, &DecodingParams::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let plain = mean_macro_f1_over_seeds(
        &train_c,
        &dev_c,
        &test_c,
        &[42, 43, 44],
        &dir.path().join("plain"),
    );
    let boosted = mean_macro_f1_over_seeds(
        &augmented,
        &dev_c,
        &test_c,
        &[42, 43, 44],
        &dir.path().join("aug"),
    );
    assert!(
        boosted > plain,
        "augmented mean {boosted:.2} does not improve over {plain:.2}"
    );
    println!("acceptance PASS: hardware-gated augmentation direction ({boosted:.2} > {plain:.2})");
}
