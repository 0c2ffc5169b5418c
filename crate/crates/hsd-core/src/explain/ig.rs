//! Integrated gradients: aggregate the score gradient along the straight
//! line from a baseline (zero embedding by default) to the input, midpoint
//! Riemann sum, per-token scores collapsed over embedding dimensions.

use ndarray::Axis;

use super::{Attribution, DifferentiableTextScorer, Method};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Mat;

pub const DEFAULT_STEPS: usize = 50;

/// Attribute the predicted-class score of one sample over its tokens. The
/// completeness gap `|sum(scores) - (F(input) - F(baseline))|` is recorded
/// on the result; it shrinks as `steps` grows.
pub fn integrated_gradients<S: DifferentiableTextScorer>(
    scorer: &S,
    sample_id: &str,
    tokens: &[String],
    steps: usize,
    baseline: Option<&Mat>,
) -> Result<Attribution> {
    if steps == 0 {
        return Err(Error::config("integrated gradients needs steps >= 1"));
    }
    if tokens.is_empty() {
        return Err(Error::Explain(format!("sample {sample_id} has no tokens")));
    }
    let input = scorer.embed_tokens(tokens);
    let baseline = match baseline {
        Some(b) => {
            if b.dim() != input.dim() {
                return Err(Error::Explain(format!(
                    "baseline shape {:?} does not match input {:?}",
                    b.dim(),
                    input.dim()
                )));
            }
            b.clone()
        }
        None => Mat::zeros(input.raw_dim()),
    };
    let class = scorer.predict_class(&input);
    let diff = &input - &baseline;

    let grads = par::map_indices(steps, |k| {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let point = &baseline + &(&diff * alpha);
        scorer.score_and_grad(&point, class).1
    });
    let mut mean_grad = Mat::zeros(input.raw_dim());
    for g in &grads {
        mean_grad += g;
    }
    mean_grad /= steps as f64;

    let contributions = &diff * &mean_grad;
    let scores: Vec<f64> = contributions.sum_axis(Axis(1)).iter().copied().collect();

    let (f_input, _) = scorer.score_and_grad(&input, class);
    let (f_baseline, _) = scorer.score_and_grad(&baseline, class);
    let gap = (scores.iter().sum::<f64>() - (f_input - f_baseline)).abs();

    Ok(Attribution {
        sample_id: sample_id.to_string(),
        tokens: tokens.to_vec(),
        scores,
        method: Method::IntegratedGradients,
        baseline_desc: "zero input embedding vector".to_string(),
        predicted_label: scorer.class_label(class),
        gap,
    })
}

/// Attribute many samples; samples are independent and fan out across
/// threads under the `parallel` feature.
pub fn integrated_gradients_batch<S: DifferentiableTextScorer>(
    scorer: &S,
    samples: &[(String, Vec<String>)],
    steps: usize,
) -> Vec<Result<Attribution>> {
    par::map_ordered(samples, |(id, tokens)| {
        integrated_gradients(scorer, id, tokens, steps, None)
    })
}
