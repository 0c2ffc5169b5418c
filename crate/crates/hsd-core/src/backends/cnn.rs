//! Convolutional text classifier: three parallel banks with window sizes
//! 2, 3 and 4 over the embedding axis, 100 filters each, ReLU and max-pool
//! over time, dropout and a linear head.

use rand_chacha::ChaCha12Rng;

use super::{dropout_mask, init_matrix, ParamIds};
use crate::tensor::{Mat, NodeId, Tape};

pub(crate) const WINDOWS: [usize; 3] = [2, 3, 4];
pub(crate) const FILTERS: usize = 100;

pub(crate) fn init(
    rng: &mut ChaCha12Rng,
    embedding_dim: usize,
    classes: usize,
) -> Vec<(String, Mat)> {
    let mut params = Vec::new();
    for w in WINDOWS {
        params.push((
            format!("conv{w}.w"),
            init_matrix(rng, w * embedding_dim, FILTERS),
        ));
        params.push((format!("conv{w}.b"), Mat::zeros((1, FILTERS))));
    }
    params.push((
        "head.w".to_string(),
        init_matrix(rng, WINDOWS.len() * FILTERS, classes),
    ));
    params.push(("head.b".to_string(), Mat::zeros((1, classes))));
    params
}

/// Trainable parameters of the three convolution banks alone (heads and
/// embeddings excluded).
pub fn conv_bank_parameter_count(embedding_dim: usize) -> usize {
    WINDOWS
        .iter()
        .map(|w| w * embedding_dim * FILTERS + FILTERS)
        .sum()
}

/// Class logits for one embedded sample. Inputs shorter than the largest
/// window are zero-padded on the tape.
pub(crate) fn logits_from_embedded(
    tape: &mut Tape,
    params: &ParamIds,
    embedded: NodeId,
    dropout: Option<(&mut ChaCha12Rng, f64)>,
) -> NodeId {
    let max_window = *WINDOWS.iter().max().expect("non-empty");
    let rows = tape.value(embedded).nrows();
    let x = if rows < max_window {
        let cols = tape.value(embedded).ncols();
        let pad = tape.leaf(Mat::zeros((max_window - rows, cols)));
        tape.stack_rows(&[embedded, pad])
    } else {
        embedded
    };

    let mut pooled = Vec::with_capacity(WINDOWS.len());
    for w in WINDOWS {
        let unfolded = tape.unfold(x, w);
        let conv = tape.matmul(unfolded, params[&format!("conv{w}.w")]);
        let conv = tape.add_row(conv, params[&format!("conv{w}.b")]);
        let act = tape.relu(conv);
        pooled.push(tape.max_rows(act));
    }
    let mut rep = pooled[0];
    for p in &pooled[1..] {
        rep = tape.concat_cols(rep, *p);
    }
    if let Some((rng, rate)) = dropout {
        let mask = dropout_mask(tape, rng, rate, (1, tape.value(rep).ncols()));
        rep = tape.mul(rep, mask);
    }
    let head = tape.matmul(rep, params["head.w"]);
    tape.add_row(head, params["head.b"])
}
