//! Minimal reverse-mode autodiff over `ndarray` matrices.
//!
//! Every value is a 2-D `f64` array; scalars are 1x1. A [`Tape`] records ops
//! in topological order, so the backward pass is a single reverse sweep. The
//! op set is exactly what the model backends need; each op's gradient is
//! covered by a finite-difference test below.

use ndarray::{concatenate, Array2, Axis};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    /// a (m x k) * b (k x n)
    Matmul(NodeId, NodeId),
    /// elementwise, same shape
    Add(NodeId, NodeId),
    /// a (m x n) + row (1 x n) broadcast over rows
    AddRow(NodeId, NodeId),
    /// elementwise product, same shape
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Transpose(NodeId),
    ConcatCols(NodeId, NodeId),
    /// columns [start, end)
    SliceCols(NodeId, usize, usize),
    /// stack 1 x n rows into a len x n matrix
    StackRows(Vec<NodeId>),
    /// rows gathered by index (duplicates allowed); backward scatter-adds
    GatherRows(NodeId, Vec<usize>),
    /// mean over rows: m x n -> 1 x n
    MeanRows(NodeId),
    /// column-wise max over rows: m x n -> 1 x n; memoizes argmax rows
    MaxRows(NodeId, Vec<usize>),
    /// sliding windows of `w` rows, flattened: (m - w + 1) x (w * n)
    Unfold(NodeId, usize),
    /// row-wise softmax
    SoftmaxRows(NodeId),
    /// mean cross-entropy of row-wise softmax vs target ids; memoizes probs
    SoftmaxCrossEntropy(NodeId, Vec<usize>, Mat),
    /// sum of all entries -> 1 x 1
    SumAll(NodeId),
}

struct Node {
    value: Mat,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients for every node of one backward sweep, indexable by `NodeId`.
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&Mat> {
        self.grads[id.0].as_ref()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.dim(), (1, 1));
        self.nodes[id.0].value[(0, 0)]
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.value(a).dim(), self.value(b).dim());
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.value(row).nrows(), 1);
        debug_assert_eq!(self.value(a).ncols(), self.value(row).ncols());
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.value(a).dim(), self.value(b).dim());
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.value(a) * k;
        self.push(value, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = concatenate![Axis(1), self.value(a).view(), self.value(b).view()];
        self.push(value, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let value = self.value(a).slice(ndarray::s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        debug_assert!(!rows.is_empty());
        let views: Vec<_> = rows.iter().map(|r| self.value(*r).view()).collect();
        let value = concatenate(Axis(0), &views).expect("stackable rows");
        self.push(value, Op::StackRows(rows.to_vec()))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let src = self.value(a);
        let mut value = Mat::zeros((indices.len(), src.ncols()));
        for (i, &idx) in indices.iter().enumerate() {
            value.row_mut(i).assign(&src.row(idx));
        }
        self.push(value, Op::GatherRows(a, indices.to_vec()))
    }

    pub fn row(&mut self, a: NodeId, index: usize) -> NodeId {
        self.gather_rows(a, &[index])
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let value = src
            .mean_axis(Axis(0))
            .expect("non-empty matrix")
            .insert_axis(Axis(0));
        self.push(value, Op::MeanRows(a))
    }

    pub fn max_rows(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let mut argmax = vec![0usize; src.ncols()];
        let mut value = Mat::zeros((1, src.ncols()));
        for c in 0..src.ncols() {
            let mut best = f64::NEG_INFINITY;
            for r in 0..src.nrows() {
                if src[(r, c)] > best {
                    best = src[(r, c)];
                    argmax[c] = r;
                }
            }
            value[(0, c)] = best;
        }
        self.push(value, Op::MaxRows(a, argmax))
    }

    pub fn unfold(&mut self, a: NodeId, window: usize) -> NodeId {
        let src = self.value(a);
        let (rows, cols) = src.dim();
        debug_assert!(window >= 1 && rows >= window);
        let out_rows = rows - window + 1;
        let mut value = Mat::zeros((out_rows, window * cols));
        for r in 0..out_rows {
            for w in 0..window {
                for c in 0..cols {
                    value[(r, w * cols + c)] = src[(r + w, c)];
                }
            }
        }
        self.push(value, Op::Unfold(a, window))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = softmax(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Mean negative log-likelihood of `targets` under the row softmax of
    /// `logits`. Returns a 1x1 node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let probs = softmax(self.value(logits));
        debug_assert_eq!(probs.nrows(), targets.len());
        let mut nll = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            // clamp keeps the log finite for vanishing probabilities but
            // still propagates NaN so divergence is caught upstream
            nll -= probs[(r, t)].clamp(1e-300, 1.0).ln();
        }
        let value = Mat::from_elem((1, 1), nll / targets.len() as f64);
        self.push(
            value,
            Op::SoftmaxCrossEntropy(logits, targets.to_vec(), probs),
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Reverse sweep from `root` (must be 1x1). Gradients accumulate for
    /// every node reachable from the root.
    pub fn backward(&self, root: NodeId) -> Grads {
        assert_eq!(
            self.nodes[root.0].value.dim(),
            (1, 1),
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Mat::from_elem((1, 1), 1.0));

        for i in (0..=root.0).rev() {
            let Some(grad) = grads[i].take() else {
                continue;
            };
            self.accumulate(i, &grad, &mut grads);
            grads[i] = Some(grad);
        }
        Grads { grads }
    }

    fn accumulate(&self, i: usize, grad: &Mat, grads: &mut [Option<Mat>]) {
        let add_to = |grads: &mut [Option<Mat>], id: NodeId, delta: Mat| match &mut grads[id.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let da = grad.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(grad);
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::Add(a, b) => {
                add_to(grads, *a, grad.clone());
                add_to(grads, *b, grad.clone());
            }
            Op::AddRow(a, row) => {
                add_to(grads, *a, grad.clone());
                let drow = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                add_to(grads, *row, drow);
            }
            Op::Mul(a, b) => {
                add_to(grads, *a, grad * self.value(*b));
                add_to(grads, *b, grad * self.value(*a));
            }
            Op::Scale(a, k) => add_to(grads, *a, grad * *k),
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                add_to(grads, *a, grad * &y.mapv(|v| 1.0 - v * v));
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                add_to(grads, *a, grad * &y.mapv(|v| v * (1.0 - v)));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                add_to(
                    grads,
                    *a,
                    grad * &x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                );
            }
            Op::Transpose(a) => add_to(grads, *a, grad.t().to_owned()),
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).ncols();
                add_to(grads, *a, grad.slice(ndarray::s![.., ..na]).to_owned());
                add_to(grads, *b, grad.slice(ndarray::s![.., na..]).to_owned());
            }
            Op::SliceCols(a, start, end) => {
                let mut da = Mat::zeros(self.value(*a).raw_dim());
                da.slice_mut(ndarray::s![.., *start..*end]).assign(grad);
                add_to(grads, *a, da);
            }
            Op::StackRows(rows) => {
                let mut offset = 0;
                for r in rows {
                    let n = self.value(*r).nrows();
                    add_to(
                        grads,
                        *r,
                        grad.slice(ndarray::s![offset..offset + n, ..]).to_owned(),
                    );
                    offset += n;
                }
            }
            Op::GatherRows(a, indices) => {
                let mut da = Mat::zeros(self.value(*a).raw_dim());
                for (r, &idx) in indices.iter().enumerate() {
                    let mut dst = da.row_mut(idx);
                    dst += &grad.row(r);
                }
                add_to(grads, *a, da);
            }
            Op::MeanRows(a) => {
                let m = self.value(*a).nrows() as f64;
                let mut da = Mat::zeros(self.value(*a).raw_dim());
                for mut row in da.rows_mut() {
                    row.assign(&(&grad.row(0) / m));
                }
                add_to(grads, *a, da);
            }
            Op::MaxRows(a, argmax) => {
                let mut da = Mat::zeros(self.value(*a).raw_dim());
                for (c, &r) in argmax.iter().enumerate() {
                    da[(r, c)] += grad[(0, c)];
                }
                add_to(grads, *a, da);
            }
            Op::Unfold(a, window) => {
                let cols = self.value(*a).ncols();
                let mut da = Mat::zeros(self.value(*a).raw_dim());
                for r in 0..grad.nrows() {
                    for w in 0..*window {
                        for c in 0..cols {
                            da[(r + w, c)] += grad[(r, w * cols + c)];
                        }
                    }
                }
                add_to(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let s = &self.nodes[i].value;
                let mut da = grad * s;
                for r in 0..da.nrows() {
                    let dot: f64 = da.row(r).sum();
                    let s_row = s.row(r).to_owned();
                    let mut da_row = da.row_mut(r);
                    da_row -= &(&s_row * dot);
                }
                add_to(grads, *a, da);
            }
            Op::SoftmaxCrossEntropy(logits, targets, probs) => {
                let scale = grad[(0, 0)] / targets.len() as f64;
                let mut dl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    dl[(r, t)] -= 1.0;
                }
                add_to(grads, *logits, dl * scale);
            }
            Op::SumAll(a) => {
                let da = Mat::from_elem(self.value(*a).raw_dim(), grad[(0, 0)]);
                add_to(grads, *a, da);
            }
        }
    }
}

pub fn softmax(logits: &Mat) -> Mat {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_mat(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences on every entry of `leaf_values[check]`,
    /// against the analytic gradient. `build` must be a pure function of the
    /// leaf values.
    fn check_grad(
        leaf_values: &[Mat],
        check: usize,
        build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    ) {
        let eval = |values: &[Mat]| -> f64 {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = values.iter().map(|v| tape.leaf(v.clone())).collect();
            let root = build(&mut tape, &ids);
            tape.scalar(root)
        };

        let mut tape = Tape::new();
        let ids: Vec<NodeId> = leaf_values.iter().map(|v| tape.leaf(v.clone())).collect();
        let root = build(&mut tape, &ids);
        let grads = tape.backward(root);
        let analytic = grads
            .get(ids[check])
            .cloned()
            .unwrap_or_else(|| Mat::zeros(leaf_values[check].raw_dim()));

        let h = 1e-6;
        for r in 0..leaf_values[check].nrows() {
            for c in 0..leaf_values[check].ncols() {
                let mut plus = leaf_values.to_vec();
                plus[check][(r, c)] += h;
                let mut minus = leaf_values.to_vec();
                minus[check][(r, c)] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic[(r, c)];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (a - numeric).abs() / denom < 1e-4,
                    "grad mismatch at ({r},{c}): analytic {a}, numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn matmul_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let a = random_mat(&mut rng, 3, 4);
        let b = random_mat(&mut rng, 4, 2);
        for check in 0..2 {
            check_grad(&[a.clone(), b.clone()], check, |t, ids| {
                let m = t.matmul(ids[0], ids[1]);
                t.sum_all(m)
            });
        }
    }

    #[test]
    fn elementwise_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = random_mat(&mut rng, 3, 3);
        let b = random_mat(&mut rng, 3, 3);
        for check in 0..2 {
            check_grad(&[a.clone(), b.clone()], check, |t, ids| {
                let s = t.add(ids[0], ids[1]);
                let m = t.mul(s, ids[1]);
                let sc = t.scale(m, 0.7);
                t.sum_all(sc)
            });
        }
    }

    #[test]
    fn activation_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = random_mat(&mut rng, 2, 5);
        check_grad(std::slice::from_ref(&a), 0, |t, ids| {
            let x = t.tanh(ids[0]);
            let y = t.sigmoid(x);
            let z = t.relu(y);
            t.sum_all(z)
        });
    }

    #[test]
    fn add_row_and_transpose_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = random_mat(&mut rng, 4, 3);
        let row = random_mat(&mut rng, 1, 3);
        for check in 0..2 {
            check_grad(&[a.clone(), row.clone()], check, |t, ids| {
                let s = t.add_row(ids[0], ids[1]);
                let tr = t.transpose(s);
                t.sum_all(tr)
            });
        }
    }

    #[test]
    fn concat_slice_stack_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = random_mat(&mut rng, 1, 3);
        let b = random_mat(&mut rng, 1, 2);
        for check in 0..2 {
            check_grad(&[a.clone(), b.clone()], check, |t, ids| {
                let cat = t.concat_cols(ids[0], ids[1]);
                let stacked = t.stack_rows(&[cat, cat]);
                let sliced = t.slice_cols(stacked, 1, 4);
                t.sum_all(sliced)
            });
        }
    }

    #[test]
    fn gather_mean_max_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let a = random_mat(&mut rng, 5, 3);
        check_grad(std::slice::from_ref(&a), 0, |t, ids| {
            let g = t.gather_rows(ids[0], &[0, 2, 2, 4]);
            let mean = t.mean_rows(g);
            let mx = t.max_rows(ids[0]);
            let s = t.add(mean, mx);
            t.sum_all(s)
        });
    }

    #[test]
    fn unfold_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let a = random_mat(&mut rng, 6, 2);
        check_grad(std::slice::from_ref(&a), 0, |t, ids| {
            let u = t.unfold(ids[0], 3);
            let r = t.relu(u);
            let m = t.max_rows(r);
            t.sum_all(m)
        });
    }

    #[test]
    fn softmax_rows_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = random_mat(&mut rng, 3, 4);
        let w = random_mat(&mut rng, 4, 2);
        for check in 0..2 {
            check_grad(&[a.clone(), w.clone()], check, |t, ids| {
                let s = t.softmax_rows(ids[0]);
                let m = t.matmul(s, ids[1]);
                t.sum_all(m)
            });
        }
    }

    #[test]
    fn cross_entropy_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let logits = random_mat(&mut rng, 4, 3);
        check_grad(std::slice::from_ref(&logits), 0, |t, ids| {
            t.softmax_cross_entropy(ids[0], &[0, 2, 1, 2])
        });
    }

    #[test]
    fn cross_entropy_value_matches_direct_computation() {
        let logits = Mat::from_shape_vec((2, 2), vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let mut tape = Tape::new();
        let id = tape.leaf(logits.clone());
        let loss = tape.softmax_cross_entropy(id, &[0, 1]);
        let p0 = (2.0f64).exp() / ((2.0f64).exp() + 1.0);
        let p1 = (3.0f64).exp() / ((3.0f64).exp() + 1.0);
        let expected = -(p0.ln() + p1.ln()) / 2.0;
        assert!((tape.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let a = random_mat(&mut rng, 5, 7);
        let s = softmax(&a);
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_style_composite_grads() {
        // one gated recurrent step, the composition the backends rely on
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let x = random_mat(&mut rng, 1, 3);
        let h = random_mat(&mut rng, 1, 2);
        let w = random_mat(&mut rng, 5, 8);
        let b = random_mat(&mut rng, 1, 8);
        for check in 0..4 {
            check_grad(
                &[x.clone(), h.clone(), w.clone(), b.clone()],
                check,
                |t, ids| {
                    let z = t.concat_cols(ids[0], ids[1]);
                    let pre = t.matmul(z, ids[2]);
                    let pre = t.add_row(pre, ids[3]);
                    let i = t.slice_cols(pre, 0, 2);
                    let i = t.sigmoid(i);
                    let g = t.slice_cols(pre, 2, 4);
                    let g = t.tanh(g);
                    let o = t.slice_cols(pre, 4, 6);
                    let o = t.sigmoid(o);
                    let c = t.mul(i, g);
                    let ct = t.tanh(c);
                    let out = t.mul(o, ct);
                    t.sum_all(out)
                },
            );
        }
    }
}
