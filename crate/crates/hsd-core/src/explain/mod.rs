//! Token-attribution explanations: integrated gradients for the
//! differentiable backends and Shapley-value estimates for black-box class
//! scorers, rendered as self-contained HTML reports.

mod ig;
mod report;
mod shap;

pub use ig::{integrated_gradients, integrated_gradients_batch, DEFAULT_STEPS};
pub use report::{render_report, write_attribution_tsv, ColorScheme};
pub use shap::{shap_values, ShapConfig, DEFAULT_MASK_TOKEN};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendKind, LoadedModel, Model};
use crate::error::{Error, Result};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IG")]
    IntegratedGradients,
    #[serde(rename = "SHAP")]
    Shap,
}

/// Per-token importance scores for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attribution {
    pub sample_id: String,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    pub method: Method,
    pub baseline_desc: String,
    pub predicted_label: String,
    /// completeness gap (IG) or local-accuracy gap (SHAP)
    pub gap: f64,
}

/// A model whose class score is differentiable with respect to its embedded
/// input. Implementations must be shareable across worker threads.
pub trait DifferentiableTextScorer: Sync {
    /// Surface tokens the attribution is reported over.
    fn tokens(&self, text: &str) -> Vec<String>;
    /// Embedded input, one row per token.
    fn embed_tokens(&self, tokens: &[String]) -> Mat;
    /// Score of `class` and its gradient with respect to `embedded`.
    fn score_and_grad(&self, embedded: &Mat, class: usize) -> (f64, Mat);
    fn predict_class(&self, embedded: &Mat) -> usize;
    fn class_label(&self, class: usize) -> String {
        class.to_string()
    }
}

/// A black-box scorer over token-masked variants of a sample. Calls must be
/// reentrant.
pub trait MaskedScorer: Sync {
    fn score(&self, tokens: &[String]) -> Result<f64>;
}

impl<F> MaskedScorer for F
where
    F: Fn(&[String]) -> f64 + Sync,
{
    fn score(&self, tokens: &[String]) -> Result<f64> {
        Ok(self(tokens))
    }
}

/// Adapter exposing a trained classification backend to integrated
/// gradients. The text-to-text backend has no differentiable class score
/// (its prediction goes through discrete decoding), so it is rejected.
#[derive(Debug)]
pub struct ModelScorer<'a> {
    model: &'a Model,
}

impl<'a> ModelScorer<'a> {
    pub fn new(loaded: &'a LoadedModel) -> Result<Self> {
        Self::from_model(&loaded.model)
    }

    pub fn from_model(model: &'a Model) -> Result<Self> {
        if model.config.kind == BackendKind::Text2Text {
            return Err(Error::UnsupportedBackend(
                "integrated gradients needs a differentiable class score; \
                 use the Shapley explainer for the text-to-text backend"
                    .to_string(),
            ));
        }
        Ok(ModelScorer { model })
    }
}

impl DifferentiableTextScorer for ModelScorer<'_> {
    fn tokens(&self, text: &str) -> Vec<String> {
        self.model
            .input_text(text)
            .split_whitespace()
            .take(self.model.config.max_seq_len.max(1))
            .map(str::to_string)
            .collect()
    }

    fn embed_tokens(&self, tokens: &[String]) -> Mat {
        self.model.embed_tokens_matrix(tokens)
    }

    fn score_and_grad(&self, embedded: &Mat, class: usize) -> (f64, Mat) {
        self.model.class_score_and_grad(embedded, class)
    }

    fn predict_class(&self, embedded: &Mat) -> usize {
        self.model.predict_class_from_embedded(embedded)
    }

    fn class_label(&self, class: usize) -> String {
        self.model.codec.label_at(class).unwrap_or("?").to_string()
    }
}

/// Adapter exposing a trained text-to-text backend to the Shapley
/// explainer: the class score of a masked variant is the teacher-forced
/// probability of the target label's token string.
pub struct LabelProbabilityScorer<'a> {
    model: &'a Model,
    label: String,
}

impl<'a> LabelProbabilityScorer<'a> {
    pub fn new(loaded: &'a LoadedModel, label: &str) -> Result<Self> {
        loaded.model.codec.encode_label(label)?;
        Ok(LabelProbabilityScorer {
            model: &loaded.model,
            label: label.to_string(),
        })
    }
}

impl MaskedScorer for LabelProbabilityScorer<'_> {
    fn score(&self, tokens: &[String]) -> Result<f64> {
        let text = tokens.join(" ");
        self.model.label_probability(&text, &self.label)
    }
}

/// Masked scorer for the classification backends: softmax probability of a
/// fixed class for the masked variant.
pub struct ClassProbabilityScorer<'a> {
    model: &'a Model,
    class: usize,
}

impl<'a> ClassProbabilityScorer<'a> {
    pub fn new(loaded: &'a LoadedModel, label: &str) -> Result<Self> {
        if loaded.model.config.kind == BackendKind::Text2Text {
            return Err(Error::UnsupportedBackend(
                "text-to-text class scores go through the label-probability scorer".to_string(),
            ));
        }
        Ok(ClassProbabilityScorer {
            model: &loaded.model,
            class: loaded.model.codec.label_index(label)?,
        })
    }
}

impl MaskedScorer for ClassProbabilityScorer<'_> {
    fn score(&self, tokens: &[String]) -> Result<f64> {
        Ok(self.model.class_probability(&tokens.join(" "), self.class))
    }
}
