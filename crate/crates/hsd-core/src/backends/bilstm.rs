//! Two-layer bidirectional recurrent network over frozen word embeddings,
//! with dropout and a linear head.

use rand_chacha::ChaCha12Rng;

use super::{dropout_mask, init_matrix, ParamIds};
use crate::tensor::{Mat, NodeId, Tape};

/// One gated recurrent cell step. `w` is `(input + hidden) x 4*hidden` with
/// gate blocks ordered input, forget, candidate, output.
pub(crate) fn lstm_cell(
    tape: &mut Tape,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    w: NodeId,
    b: NodeId,
    hidden: usize,
) -> (NodeId, NodeId) {
    let z = tape.concat_cols(x, h_prev);
    let pre = tape.matmul(z, w);
    let pre = tape.add_row(pre, b);
    let i = tape.slice_cols(pre, 0, hidden);
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(pre, hidden, 2 * hidden);
    let f = tape.sigmoid(f);
    let g = tape.slice_cols(pre, 2 * hidden, 3 * hidden);
    let g = tape.tanh(g);
    let o = tape.slice_cols(pre, 3 * hidden, 4 * hidden);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c_prev);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let ct = tape.tanh(c);
    let h = tape.mul(o, ct);
    (h, c)
}

/// Run one direction over the row indices of `x` in the given order,
/// returning the hidden state after each step.
pub(crate) fn run_direction(
    tape: &mut Tape,
    x: NodeId,
    order: impl Iterator<Item = usize>,
    w: NodeId,
    b: NodeId,
    hidden: usize,
) -> Vec<NodeId> {
    let mut h = tape.leaf(Mat::zeros((1, hidden)));
    let mut c = tape.leaf(Mat::zeros((1, hidden)));
    let mut states = Vec::new();
    for t in order {
        let x_t = tape.row(x, t);
        let (nh, nc) = lstm_cell(tape, x_t, h, c, w, b, hidden);
        h = nh;
        c = nc;
        states.push(h);
    }
    states
}

/// One bidirectional layer: per-position concat of the forward state and the
/// backward state for the same position, as a `T x 2*hidden` matrix; also
/// returns the two final states.
pub(crate) fn bidirectional_layer(
    tape: &mut Tape,
    x: NodeId,
    prefix: &str,
    params: &ParamIds,
    hidden: usize,
) -> (NodeId, NodeId, NodeId) {
    let t_len = tape.value(x).nrows();
    let wf = params[&format!("{prefix}.fwd.w")];
    let bf = params[&format!("{prefix}.fwd.b")];
    let wb = params[&format!("{prefix}.bwd.w")];
    let bb = params[&format!("{prefix}.bwd.b")];
    let fwd = run_direction(tape, x, 0..t_len, wf, bf, hidden);
    let bwd = run_direction(tape, x, (0..t_len).rev(), wb, bb, hidden);
    let rows: Vec<NodeId> = (0..t_len)
        .map(|t| tape.concat_cols(fwd[t], bwd[t_len - 1 - t]))
        .collect();
    let output = tape.stack_rows(&rows);
    (output, fwd[t_len - 1], bwd[t_len - 1])
}

pub(crate) fn init(
    rng: &mut ChaCha12Rng,
    embedding_dim: usize,
    hidden: usize,
    classes: usize,
) -> Vec<(String, Mat)> {
    let mut params = Vec::new();
    for (layer, input) in [("lstm1", embedding_dim), ("lstm2", 2 * hidden)] {
        for dir in ["fwd", "bwd"] {
            params.push((
                format!("{layer}.{dir}.w"),
                init_matrix(rng, input + hidden, 4 * hidden),
            ));
            params.push((format!("{layer}.{dir}.b"), Mat::zeros((1, 4 * hidden))));
        }
    }
    params.push(("head.w".to_string(), init_matrix(rng, 2 * hidden, classes)));
    params.push(("head.b".to_string(), Mat::zeros((1, classes))));
    params
}

/// Class logits for one embedded sample (`T x embedding_dim`).
pub(crate) fn logits_from_embedded(
    tape: &mut Tape,
    params: &ParamIds,
    embedded: NodeId,
    hidden: usize,
    dropout: Option<(&mut ChaCha12Rng, f64)>,
) -> NodeId {
    let (layer1, _, _) = bidirectional_layer(tape, embedded, "lstm1", params, hidden);
    let (_, last_fwd, last_bwd) = bidirectional_layer(tape, layer1, "lstm2", params, hidden);
    let mut rep = tape.concat_cols(last_fwd, last_bwd);
    if let Some((rng, rate)) = dropout {
        let mask = dropout_mask(tape, rng, rate, (1, tape.value(rep).ncols()));
        rep = tape.mul(rep, mask);
    }
    let head = tape.matmul(rep, params["head.w"]);
    tape.add_row(head, params["head.b"])
}
