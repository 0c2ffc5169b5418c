//! Shapley-value token attribution with a replace-by-mask masker.
//!
//! Exact computation enumerates all coalitions when the evaluation budget
//! covers `2^n`; otherwise the estimate averages marginal contributions over
//! seeded random permutations and is then shifted so the local-accuracy
//! identity `sum(scores) = f(input) - f(all-masked)` holds exactly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{Attribution, MaskedScorer, Method};
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_MASK_TOKEN: &str = "<mask>";
/// Exact enumeration is capped here no matter the budget.
const MAX_EXACT_TOKENS: usize = 20;

#[derive(Debug, Clone)]
pub struct ShapConfig {
    /// predictor-call budget; defaults to `2n + 2048` for n tokens
    pub max_evals: Option<usize>,
    pub mask_token: String,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            max_evals: None,
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
            seed: 0,
        }
    }
}

fn masked_variant(tokens: &[String], keep: &[bool], mask_token: &str) -> Vec<String> {
    tokens
        .iter()
        .zip(keep)
        .map(|(t, &k)| if k { t.clone() } else { mask_token.to_string() })
        .collect()
}

/// Estimate per-token Shapley values of `predictor` for one sample.
pub fn shap_values<P: MaskedScorer>(
    predictor: &P,
    sample_id: &str,
    tokens: &[String],
    predicted_label: &str,
    config: &ShapConfig,
) -> Result<Attribution> {
    let n = tokens.len();
    if n == 0 {
        return Err(Error::Explain(format!("sample {sample_id} has no tokens")));
    }
    let max_evals = config.max_evals.unwrap_or(2 * n + 2048);
    if max_evals < n + 2 {
        return Err(Error::config(format!(
            "max-evals {max_evals} cannot cover {n} tokens"
        )));
    }

    let scores = if n <= MAX_EXACT_TOKENS && (1usize << n) <= max_evals {
        exact_values(predictor, tokens, &config.mask_token)?
    } else {
        sampled_values(predictor, tokens, config, max_evals)?
    };

    let f_full = predictor.score(tokens)?;
    let f_empty = predictor.score(&masked_variant(tokens, &vec![false; n], &config.mask_token))?;
    let gap = (scores.iter().sum::<f64>() - (f_full - f_empty)).abs();

    Ok(Attribution {
        sample_id: sample_id.to_string(),
        tokens: tokens.to_vec(),
        scores,
        method: Method::Shap,
        baseline_desc: format!("replace-by-mask({})", config.mask_token),
        predicted_label: predicted_label.to_string(),
        gap,
    })
}

/// All `2^n` coalition values, then the exact combinatorial Shapley sum.
fn exact_values<P: MaskedScorer>(
    predictor: &P,
    tokens: &[String],
    mask_token: &str,
) -> Result<Vec<f64>> {
    let n = tokens.len();
    let total = 1usize << n;
    let values: Vec<Result<f64>> = par::map_indices(total, |mask| {
        let keep: Vec<bool> = (0..n).map(|i| (mask >> i) & 1 == 1).collect();
        predictor.score(&masked_variant(tokens, &keep, mask_token))
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;

    // w(s) = s! (n-1-s)! / n! = 1 / (n * C(n-1, s))
    let mut weights = vec![0.0f64; n];
    for (s, w) in weights.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binomial(n - 1, s));
    }

    let mut scores = vec![0.0f64; n];
    for (mask, &without) in values.iter().enumerate() {
        let size = mask.count_ones() as usize;
        for i in 0..n {
            if (mask >> i) & 1 == 0 {
                let with = values[mask | (1 << i)];
                scores[i] += weights[size] * (with - without);
            }
        }
    }
    Ok(scores)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut out = 1.0f64;
    for i in 0..k {
        out *= (n - i) as f64;
        out /= (i + 1) as f64;
    }
    out
}

/// Coalition sampling: averaged marginal contributions over random
/// permutations, one derived seed per permutation so the fan-out is
/// deterministic, plus the efficiency shift.
fn sampled_values<P: MaskedScorer>(
    predictor: &P,
    tokens: &[String],
    config: &ShapConfig,
    max_evals: usize,
) -> Result<Vec<f64>> {
    let n = tokens.len();
    let f_empty = predictor.score(&masked_variant(tokens, &vec![false; n], &config.mask_token))?;
    let f_full = predictor.score(tokens)?;
    let n_perms = ((max_evals - 2) / n).max(1);

    let per_perm: Vec<Result<Vec<f64>>> = par::map_indices(n_perms, |p| {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(p as u64));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut keep = vec![false; n];
        let mut previous = f_empty;
        let mut marginals = vec![0.0f64; n];
        for (step, &token) in order.iter().enumerate() {
            keep[token] = true;
            let value = if step + 1 == n {
                f_full
            } else {
                predictor.score(&masked_variant(tokens, &keep, &config.mask_token))?
            };
            marginals[token] = value - previous;
            previous = value;
        }
        Ok(marginals)
    });

    let mut scores = vec![0.0f64; n];
    for marginals in per_perm {
        for (s, m) in scores.iter_mut().zip(marginals?) {
            *s += m;
        }
    }
    for s in scores.iter_mut() {
        *s /= n_perms as f64;
    }
    // efficiency shift: distribute the residual evenly
    let residual = (f_full - f_empty) - scores.iter().sum::<f64>();
    for s in scores.iter_mut() {
        *s += residual / n as f64;
    }
    Ok(scores)
}
