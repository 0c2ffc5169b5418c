//! Sequence-to-sequence classifier: recurrent encoder over the prefixed
//! input, attention-equipped recurrent decoder emitting label-token strings
//! character by character. Teacher forcing with cross-entropy at training
//! time, greedy decoding at prediction time; out-of-class strings are dealt
//! with downstream by the label codec.

use rand_chacha::ChaCha12Rng;

use super::bilstm::lstm_cell;
use super::{dropout_mask, init_matrix, ParamIds};
use crate::tensor::{Mat, NodeId, Tape};

pub(crate) const DEC_PAD: usize = 0;
pub(crate) const DEC_BOS: usize = 1;
pub(crate) const DEC_EOS: usize = 2;
pub(crate) const DEC_UNK: usize = 3;
pub(crate) const DEC_VOCAB: usize = 14;
pub(crate) const MAX_DECODE_STEPS: usize = 8;

/// Decoder-vocabulary ids for a label token string plus the end marker.
pub(crate) fn encode_target(token: &str) -> Vec<usize> {
    let mut ids: Vec<usize> = token
        .chars()
        .map(|c| match c.to_digit(10) {
            Some(d) => 4 + d as usize,
            None => DEC_UNK,
        })
        .collect();
    ids.push(DEC_EOS);
    ids
}

/// String form of generated ids (the end marker terminates decoding before
/// this point; padding and start markers contribute nothing).
pub(crate) fn decode_generated(ids: &[usize]) -> String {
    ids.iter()
        .filter_map(|&id| match id {
            DEC_PAD | DEC_BOS | DEC_EOS => None,
            DEC_UNK => Some('?'),
            d if (4..DEC_VOCAB).contains(&d) => {
                Some(char::from_digit((d - 4) as u32, 10).expect("digit"))
            }
            _ => Some('?'),
        })
        .collect()
}

pub(crate) fn init(
    rng: &mut ChaCha12Rng,
    vocab: usize,
    dim: usize,
    hidden: usize,
) -> Vec<(String, Mat)> {
    let mut params = Vec::new();
    params.push(("enc.embed".to_string(), init_matrix(rng, vocab, dim)));
    for dir in ["fwd", "bwd"] {
        params.push((
            format!("enc.{dir}.w"),
            init_matrix(rng, dim + hidden, 4 * hidden),
        ));
        params.push((format!("enc.{dir}.b"), Mat::zeros((1, 4 * hidden))));
    }
    params.push(("dec.embed".to_string(), init_matrix(rng, DEC_VOCAB, dim)));
    params.push((
        "dec.w".to_string(),
        init_matrix(rng, dim + hidden, 4 * hidden),
    ));
    params.push(("dec.b".to_string(), Mat::zeros((1, 4 * hidden))));
    params.push(("attn.w".to_string(), init_matrix(rng, hidden, 2 * hidden)));
    params.push((
        "comb.w".to_string(),
        init_matrix(rng, hidden + 2 * hidden, hidden),
    ));
    params.push(("comb.b".to_string(), Mat::zeros((1, hidden))));
    params.push(("out.w".to_string(), init_matrix(rng, hidden, DEC_VOCAB)));
    params.push(("out.b".to_string(), Mat::zeros((1, DEC_VOCAB))));
    params
}

/// Encoder memory: `T x 2*hidden` bidirectional states.
fn encode(tape: &mut Tape, params: &ParamIds, ids: &[usize], hidden: usize) -> NodeId {
    let embedded = tape.gather_rows(params["enc.embed"], ids);
    let t_len = ids.len();
    let fwd = super::bilstm::run_direction(
        tape,
        embedded,
        0..t_len,
        params["enc.fwd.w"],
        params["enc.fwd.b"],
        hidden,
    );
    let bwd = super::bilstm::run_direction(
        tape,
        embedded,
        (0..t_len).rev(),
        params["enc.bwd.w"],
        params["enc.bwd.b"],
        hidden,
    );
    let rows: Vec<NodeId> = (0..t_len)
        .map(|t| tape.concat_cols(fwd[t], bwd[t_len - 1 - t]))
        .collect();
    tape.stack_rows(&rows)
}

/// One decoder step: recurrent cell, attention over the encoder memory,
/// combined feature, output logits over the decoder vocabulary.
#[allow(clippy::too_many_arguments)]
fn decoder_step(
    tape: &mut Tape,
    params: &ParamIds,
    memory: NodeId,
    prev_token: usize,
    h: NodeId,
    c: NodeId,
    hidden: usize,
    dropout: &mut Option<(&mut ChaCha12Rng, f64)>,
) -> (NodeId, NodeId, NodeId) {
    let x = tape.row(params["dec.embed"], prev_token);
    let (h, c) = lstm_cell(tape, x, h, c, params["dec.w"], params["dec.b"], hidden);
    let query = tape.matmul(h, params["attn.w"]);
    let memory_t = tape.transpose(memory);
    let scores = tape.matmul(query, memory_t);
    let weights = tape.softmax_rows(scores);
    let context = tape.matmul(weights, memory);
    let cat = tape.concat_cols(h, context);
    let combined = tape.matmul(cat, params["comb.w"]);
    let combined = tape.add_row(combined, params["comb.b"]);
    let mut combined = tape.tanh(combined);
    if let Some((rng, rate)) = dropout {
        let mask = dropout_mask(tape, rng, *rate, (1, hidden));
        combined = tape.mul(combined, mask);
    }
    let logits = tape.matmul(combined, params["out.w"]);
    let logits = tape.add_row(logits, params["out.b"]);
    (logits, h, c)
}

/// Teacher-forced mean cross-entropy of `target` given `ids`.
pub(crate) fn sequence_loss(
    tape: &mut Tape,
    params: &ParamIds,
    ids: &[usize],
    target: &[usize],
    hidden: usize,
    mut dropout: Option<(&mut ChaCha12Rng, f64)>,
) -> NodeId {
    let memory = encode(tape, params, ids, hidden);
    let mut h = tape.leaf(Mat::zeros((1, hidden)));
    let mut c = tape.leaf(Mat::zeros((1, hidden)));
    let mut prev = DEC_BOS;
    let mut logit_rows = Vec::with_capacity(target.len());
    for &t in target {
        let (logits, nh, nc) = decoder_step(tape, params, memory, prev, h, c, hidden, &mut dropout);
        logit_rows.push(logits);
        h = nh;
        c = nc;
        prev = t;
    }
    let stacked = tape.stack_rows(&logit_rows);
    tape.softmax_cross_entropy(stacked, target)
}

/// Greedy decode: argmax token per step until the end marker or the step
/// bound. Returns the raw generated string (possibly out of class).
pub(crate) fn generate(tape: &mut Tape, params: &ParamIds, ids: &[usize], hidden: usize) -> String {
    let memory = encode(tape, params, ids, hidden);
    let mut h = tape.leaf(Mat::zeros((1, hidden)));
    let mut c = tape.leaf(Mat::zeros((1, hidden)));
    let mut prev = DEC_BOS;
    let mut generated = Vec::new();
    for _ in 0..MAX_DECODE_STEPS {
        let (logits, nh, nc) = decoder_step(tape, params, memory, prev, h, c, hidden, &mut None);
        h = nh;
        c = nc;
        let row = tape.value(logits);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (i, v) in row.row(0).iter().enumerate() {
            if *v > best_v {
                best_v = *v;
                best = i;
            }
        }
        if best == DEC_EOS {
            break;
        }
        generated.push(best);
        prev = best;
    }
    decode_generated(&generated)
}

/// Teacher-forced probability of the exact target sequence; the class score
/// used when explaining the text-to-text backend.
pub(crate) fn sequence_probability(
    tape: &mut Tape,
    params: &ParamIds,
    ids: &[usize],
    target: &[usize],
    hidden: usize,
) -> f64 {
    let memory = encode(tape, params, ids, hidden);
    let mut h = tape.leaf(Mat::zeros((1, hidden)));
    let mut c = tape.leaf(Mat::zeros((1, hidden)));
    let mut prev = DEC_BOS;
    let mut prob = 1.0;
    for &t in target {
        let (logits, nh, nc) = decoder_step(tape, params, memory, prev, h, c, hidden, &mut None);
        let probs = crate::tensor::softmax(tape.value(logits));
        prob *= probs[(0, t)];
        h = nh;
        c = nc;
        prev = t;
    }
    prob
}
