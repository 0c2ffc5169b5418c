//! Scoring, aggregation over repeated runs, significance testing and
//! disagreement audits.
//!
//! F1 values are kept as percentages (0..=100) throughout to match how the
//! reports read.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::backends::PredictionSet;
use crate::corpus::{LabeledCorpus, TaskSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerClass {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scores {
    /// support-weighted mean of per-class F1, in percent
    pub weighted_f1: f64,
    /// unweighted mean of per-class F1, in percent
    pub macro_f1: f64,
    pub per_class: Vec<PerClass>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// row labels (gold)
    pub gold_labels: Vec<String>,
    /// column labels (predicted); a superset of the declared space when a
    /// prediction file carries stray labels
    pub pred_labels: Vec<String>,
    /// counts\[gold\]\[pred\]
    pub counts: Vec<Vec<usize>>,
}

fn check_id_sets(preds: &PredictionSet, gold: &LabeledCorpus) -> Result<()> {
    let pred_ids: std::collections::BTreeSet<&str> =
        preds.predictions.keys().map(String::as_str).collect();
    let gold_ids: std::collections::BTreeSet<&str> =
        gold.samples.iter().map(|s| s.id.as_str()).collect();
    if pred_ids == gold_ids {
        return Ok(());
    }
    let missing: Vec<&str> = gold_ids.difference(&pred_ids).copied().take(5).collect();
    let extra: Vec<&str> = pred_ids.difference(&gold_ids).copied().take(5).collect();
    Err(Error::Evaluation(format!(
        "prediction/gold id mismatch; missing predictions for [{}], extra predictions for [{}]",
        missing.join(", "),
        extra.join(", ")
    )))
}

/// Per-class precision/recall/F1 plus the weighted and macro means.
///
/// Classes belong to the gold corpus's declared label space; a class absent
/// from the gold labels contributes F1 = 0 to the macro mean and produces a
/// warning.
pub fn f1_scores(preds: &PredictionSet, gold: &LabeledCorpus) -> Result<Scores> {
    check_id_sets(preds, gold)?;
    let subtask = &gold.task.subtask;
    let classes = &gold.task.label_space;
    let mut warnings = Vec::new();

    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pred_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut gold_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for s in &gold.samples {
        let gold_label = s.label(subtask).ok_or_else(|| {
            Error::Evaluation(format!("gold sample {} has no label for {subtask:?}", s.id))
        })?;
        let pred_label = preds
            .predictions
            .get(&s.id)
            .expect("id sets checked")
            .as_str();
        *gold_count.entry(gold_label).or_insert(0) += 1;
        *pred_count.entry(pred_label).or_insert(0) += 1;
        if gold_label == pred_label {
            *tp.entry(gold_label).or_insert(0) += 1;
        }
        total += 1;
    }

    for label in pred_count.keys() {
        if !classes.iter().any(|c| c == label) {
            warnings.push(format!(
                "predicted label {label:?} is outside the declared space"
            ));
        }
    }

    let mut per_class = Vec::with_capacity(classes.len());
    for label in classes {
        let tp_c = *tp.get(label.as_str()).unwrap_or(&0) as f64;
        let pred_c = *pred_count.get(label.as_str()).unwrap_or(&0) as f64;
        let gold_c = *gold_count.get(label.as_str()).unwrap_or(&0) as f64;
        if gold_c == 0.0 {
            warnings.push(format!(
                "class {label:?} absent from gold; macro F1 includes it as 0"
            ));
        }
        let precision = if pred_c > 0.0 { tp_c / pred_c } else { 0.0 };
        let recall = if gold_c > 0.0 { tp_c / gold_c } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(PerClass {
            label: label.clone(),
            precision: precision * 100.0,
            recall: recall * 100.0,
            f1: f1 * 100.0,
            support: gold_c as usize,
        });
    }

    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    let weighted_f1 = per_class
        .iter()
        .map(|c| c.f1 * c.support as f64)
        .sum::<f64>()
        / total.max(1) as f64;

    Ok(Scores {
        weighted_f1,
        macro_f1,
        per_class,
        warnings,
    })
}

/// Rows are gold labels, columns predicted labels.
pub fn confusion_matrix(preds: &PredictionSet, gold: &LabeledCorpus) -> Result<ConfusionMatrix> {
    check_id_sets(preds, gold)?;
    let subtask = &gold.task.subtask;
    let gold_labels = gold.task.label_space.clone();
    let mut pred_labels = gold_labels.clone();
    for label in preds.predictions.values() {
        if !pred_labels.contains(label) {
            pred_labels.push(label.clone());
        }
    }
    let mut counts = vec![vec![0usize; pred_labels.len()]; gold_labels.len()];
    for s in &gold.samples {
        let g = s.label(subtask).ok_or_else(|| {
            Error::Evaluation(format!("gold sample {} has no label for {subtask:?}", s.id))
        })?;
        let p = preds.predictions.get(&s.id).expect("id sets checked");
        let gi = gold_labels
            .iter()
            .position(|l| l == g)
            .ok_or_else(|| Error::Evaluation(format!("gold label {g:?} outside declared space")))?;
        let pi = pred_labels
            .iter()
            .position(|l| l == p)
            .expect("collected above");
        counts[gi][pi] += 1;
    }
    Ok(ConfusionMatrix {
        gold_labels,
        pred_labels,
        counts,
    })
}

/// Means and sample standard deviations (n - 1) over repeated runs of
/// (weighted F1, macro F1). A single run has sd 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunAggregate {
    pub n_runs: usize,
    pub mean_weighted: f64,
    pub mean_macro: f64,
    pub sd_weighted: f64,
    pub sd_macro: f64,
}

pub fn aggregate_runs(scores: &[(f64, f64)]) -> Result<RunAggregate> {
    if scores.is_empty() {
        return Err(Error::Evaluation(
            "aggregate_runs needs at least one run".into(),
        ));
    }
    let n = scores.len() as f64;
    let mean_w = scores.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_m = scores.iter().map(|s| s.1).sum::<f64>() / n;
    let (sd_w, sd_m) = if scores.len() == 1 {
        (0.0, 0.0)
    } else {
        let var_w = scores.iter().map(|s| (s.0 - mean_w).powi(2)).sum::<f64>() / (n - 1.0);
        let var_m = scores.iter().map(|s| (s.1 - mean_m).powi(2)).sum::<f64>() / (n - 1.0);
        (var_w.sqrt(), var_m.sqrt())
    };
    Ok(RunAggregate {
        n_runs: scores.len(),
        mean_weighted: mean_w,
        mean_macro: mean_m,
        sd_weighted: sd_w,
        sd_macro: sd_m,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    /// p < 0.05
    pub significant: bool,
}

/// Two-sided two-sample Welch t-test (unequal variances).
///
/// Degenerate inputs are resolved by the mean difference: equal means give
/// p = 1, a non-zero difference with zero pooled variance gives p = 0.
pub fn t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<TTestResult> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::Evaluation(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            sample_a.len(),
            sample_b.len()
        )));
    }
    let na = sample_a.len() as f64;
    let nb = sample_b.len() as f64;
    let mean_a = sample_a.iter().sum::<f64>() / na;
    let mean_b = sample_b.iter().sum::<f64>() / nb;
    let var_a = sample_a.iter().map(|x| (x - mean_a).powi(2)).sum::<f64>() / (na - 1.0);
    let var_b = sample_b.iter().map(|x| (x - mean_b).powi(2)).sum::<f64>() / (nb - 1.0);

    let se2 = var_a / na + var_b / nb;
    let diff = mean_a - mean_b;
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return Ok(TTestResult {
            t_statistic: if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            },
            degrees_of_freedom: na + nb - 2.0,
            p_value: p,
            significant: p < 0.05,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2.powi(2) / ((var_a / na).powi(2) / (na - 1.0) + (var_b / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Evaluation(format!("t distribution with df={df}: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    let p = p.clamp(0.0, 1.0);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant: p < 0.05,
    })
}

/// One prediction/gold mismatch, for the human annotation audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Disagreement {
    pub id: String,
    pub text: String,
    pub gold: String,
    pub predicted: String,
}

/// All samples where the prediction differs from gold, sorted by sample id,
/// optionally restricted to one predicted label.
pub fn find_disagreements(
    preds: &PredictionSet,
    gold: &LabeledCorpus,
    filter_predicted: Option<&str>,
) -> Result<Vec<Disagreement>> {
    check_id_sets(preds, gold)?;
    let subtask = &gold.task.subtask;
    let mut out = Vec::new();
    for s in &gold.samples {
        let g = s.label(subtask).ok_or_else(|| {
            Error::Evaluation(format!("gold sample {} has no label for {subtask:?}", s.id))
        })?;
        let p = preds.predictions.get(&s.id).expect("id sets checked");
        if p == g {
            continue;
        }
        if let Some(filter) = filter_predicted {
            if p != filter {
                continue;
            }
        }
        out.push(Disagreement {
            id: s.id.clone(),
            text: s.text.clone(),
            gold: g.to_string(),
            predicted: p.clone(),
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Write the audit file: `_id`, `text`, `gold`, `predicted`, tab-separated.
pub fn write_audit_file(disagreements: &[Disagreement], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "_id\ttext\tgold\tpredicted")?;
    for d in disagreements {
        writeln!(out, "{}\t{}\t{}\t{}", d.id, d.text, d.gold, d.predicted)?;
    }
    out.flush()?;
    Ok(())
}

/// Full evaluation report for one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskSpec,
    pub n_runs: usize,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub sd_weighted: f64,
    pub sd_macro: f64,
    pub per_class: Vec<PerClass>,
    pub confusion: ConfusionMatrix,
    pub ooc_count: Option<u64>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn single_run(
        preds: &PredictionSet,
        gold: &LabeledCorpus,
        scores: Scores,
        confusion: ConfusionMatrix,
    ) -> Self {
        EvalReport {
            task: gold.task.clone(),
            n_runs: 1,
            weighted_f1: scores.weighted_f1,
            macro_f1: scores.macro_f1,
            sd_weighted: 0.0,
            sd_macro: 0.0,
            per_class: scores.per_class,
            confusion,
            ooc_count: preds.ooc_count,
            warnings: scores.warnings,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Evaluation(format!("serialize report: {e}")))
    }

    /// Human-readable table, percentages with two decimals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task: {} / {}   runs: {}\n",
            self.task.dataset, self.task.subtask, self.n_runs
        ));
        out.push_str(&format!(
            "weighted F1: {:.2} ({:.2})   macro F1: {:.2} ({:.2})\n",
            self.weighted_f1, self.sd_weighted, self.macro_f1, self.sd_macro
        ));
        if let Some(ooc) = self.ooc_count {
            out.push_str(&format!("ooc corrections: {ooc}\n"));
        }
        out.push_str("\nclass            precision   recall       f1  support\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<16} {:>9.2} {:>8.2} {:>8.2} {:>8}\n",
                c.label, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push_str("\nconfusion (rows gold, cols predicted):\n");
        out.push_str(&format!("{:<16}", ""));
        for l in &self.confusion.pred_labels {
            out.push_str(&format!("{l:>12}"));
        }
        out.push('\n');
        for (gi, l) in self.confusion.gold_labels.iter().enumerate() {
            out.push_str(&format!("{l:<16}"));
            for count in &self.confusion.counts[gi] {
                out.push_str(&format!("{count:>12}"));
            }
            out.push('\n');
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}
