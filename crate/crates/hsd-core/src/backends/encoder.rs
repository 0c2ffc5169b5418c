//! Self-attention encoder with a classification head: trainable token and
//! position embeddings, two attention blocks with feed-forward residuals,
//! mean pooling.

use rand_chacha::ChaCha12Rng;

use super::{dropout_mask, init_matrix, ParamIds};
use crate::tensor::{Mat, NodeId, Tape};

pub(crate) const LAYERS: usize = 2;

pub(crate) fn init(
    rng: &mut ChaCha12Rng,
    vocab: usize,
    dim: usize,
    max_seq_len: usize,
    classes: usize,
) -> Vec<(String, Mat)> {
    let mut params = Vec::new();
    params.push(("embed".to_string(), init_matrix(rng, vocab, dim)));
    params.push(("pos".to_string(), init_matrix(rng, max_seq_len, dim)));
    for l in 0..LAYERS {
        for name in ["wq", "wk", "wv", "wo"] {
            params.push((format!("l{l}.{name}"), init_matrix(rng, dim, dim)));
        }
        params.push((format!("l{l}.ff1.w"), init_matrix(rng, dim, 4 * dim)));
        params.push((format!("l{l}.ff1.b"), Mat::zeros((1, 4 * dim))));
        params.push((format!("l{l}.ff2.w"), init_matrix(rng, 4 * dim, dim)));
        params.push((format!("l{l}.ff2.b"), Mat::zeros((1, dim))));
    }
    params.push(("head.w".to_string(), init_matrix(rng, dim, classes)));
    params.push(("head.b".to_string(), Mat::zeros((1, classes))));
    params
}

/// Class logits for one token-id sequence.
pub(crate) fn logits_from_ids(
    tape: &mut Tape,
    params: &ParamIds,
    ids: &[usize],
    dim: usize,
    dropout: Option<(&mut ChaCha12Rng, f64)>,
) -> NodeId {
    let token_emb = tape.gather_rows(params["embed"], ids);
    logits_from_embedded(tape, params, token_emb, dim, dropout)
}

/// Class logits from already-embedded tokens; position embeddings are added
/// here so gradients with respect to the token embeddings stay clean.
pub(crate) fn logits_from_embedded(
    tape: &mut Tape,
    params: &ParamIds,
    token_emb: NodeId,
    dim: usize,
    dropout: Option<(&mut ChaCha12Rng, f64)>,
) -> NodeId {
    let positions: Vec<usize> = (0..tape.value(token_emb).nrows()).collect();
    let pos_emb = tape.gather_rows(params["pos"], &positions);
    let mut x = tape.add(token_emb, pos_emb);

    let scale = 1.0 / (dim as f64).sqrt();
    for l in 0..LAYERS {
        let q = tape.matmul(x, params[&format!("l{l}.wq")]);
        let k = tape.matmul(x, params[&format!("l{l}.wk")]);
        let v = tape.matmul(x, params[&format!("l{l}.wv")]);
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt);
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax_rows(scores);
        let mixed = tape.matmul(attn, v);
        let projected = tape.matmul(mixed, params[&format!("l{l}.wo")]);
        x = tape.add(x, projected);

        let ff = tape.matmul(x, params[&format!("l{l}.ff1.w")]);
        let ff = tape.add_row(ff, params[&format!("l{l}.ff1.b")]);
        let ff = tape.relu(ff);
        let ff = tape.matmul(ff, params[&format!("l{l}.ff2.w")]);
        let ff = tape.add_row(ff, params[&format!("l{l}.ff2.b")]);
        x = tape.add(x, ff);
    }

    let mut rep = tape.mean_rows(x);
    if let Some((rng, rate)) = dropout {
        let mask = dropout_mask(tape, rng, rate, (1, tape.value(rep).ncols()));
        rep = tape.mul(rep, mask);
    }
    let head = tape.matmul(rep, params["head.w"]);
    tape.add_row(head, params["head.b"])
}
