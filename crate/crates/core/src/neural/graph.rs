use std::collections::HashMap;

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::Result;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Input,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Scale(Var, f64),
    ScaleGrad(Var, f64),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<Option<usize>>),
    Im2Col { input: Var, window: usize, blocks: Vec<usize> },
    MaxPool { input: Var, argmax: Vec<usize> },
    Sum(Var),
    SoftmaxCe { logits: Var, probs: Tensor, targets: Vec<usize>, weights: Vec<f64>, normalizer: f64 },
}

#[derive(Debug)]
struct Node {
    /// `None` for parameters, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
}

/// A tape of operations over parameters borrowed from a [`ParamStore`].
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(p)) => self.store.get(*p),
            (None, _) => unreachable!("only parameters lack a stored value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// The node for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Tensor::zeros(rows, cols))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert_eq!((1, av.cols), bv.shape(), "add_row shape mismatch");
        let mut out = av.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shape mismatch");
        let mut out = av.clone();
        out.add_assign(bv);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let out = Tensor { rows: av.rows, cols: av.cols, data };
        self.push(out, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s))
    }

    /// Identity forward; multiplies the incoming gradient by `s` on the way back.
    pub fn scale_grad(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).clone();
        self.push(out, Op::ScaleGrad(a, s))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(av.rows, end - start);
        for r in 0..av.rows {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.rows, "slice_rows out of range");
        let out = Tensor { rows: end - start, cols: av.cols, data: av.data[start * av.cols..end * av.cols].to_vec() };
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + pv.cols].copy_from_slice(pv.row(r));
            }
            off += pv.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        self.push(Tensor { rows, cols, data }, Op::ConcatRows(parts.to_vec()))
    }

    /// Rows of `table` by index; `None` yields a zero row.
    pub fn gather(&mut self, table: Var, ids: &[Option<usize>]) -> Var {
        let tv = self.value(table);
        let mut out = Tensor::zeros(ids.len(), tv.cols);
        for (r, id) in ids.iter().enumerate() {
            if let Some(i) = id {
                out.row_mut(r).copy_from_slice(tv.row(*i));
            }
        }
        self.push(out, Op::Gather(table, ids.to_vec()))
    }

    /// Window unfolding for 1-D convolution. The rows of `input` are split
    /// into consecutive blocks of the given lengths; each block yields
    /// `max(len, window) - window + 1` rows holding `window` consecutive input
    /// rows side by side, zero past the block end.
    pub fn im2col(&mut self, input: Var, window: usize, blocks: &[usize]) -> Var {
        let iv = self.value(input);
        assert_eq!(blocks.iter().sum::<usize>(), iv.rows, "blocks must cover the input");
        let d = iv.cols;
        let out_rows: usize = blocks.iter().map(|&l| l.max(window) - window + 1).sum();
        let mut out = Tensor::zeros(out_rows, window * d);
        let (mut start, mut r) = (0, 0);
        for &len in blocks {
            for p in 0..len.max(window) - window + 1 {
                let row = out.row_mut(r);
                for k in 0..window.min(len.saturating_sub(p)) {
                    row[k * d..(k + 1) * d].copy_from_slice(iv.row(start + p + k));
                }
                r += 1;
            }
            start += len;
        }
        self.push(out, Op::Im2Col { input, window, blocks: blocks.to_vec() })
    }

    /// Column-wise max over consecutive row groups of the given sizes.
    pub fn max_pool(&mut self, input: Var, groups: &[usize]) -> Var {
        let iv = self.value(input);
        assert_eq!(groups.iter().sum::<usize>(), iv.rows, "groups must cover the input");
        assert!(groups.iter().all(|&g| g > 0), "empty pooling group");
        let c = iv.cols;
        let mut out = Tensor::zeros(groups.len(), c);
        let mut argmax = vec![0; groups.len() * c];
        let mut start = 0;
        for (gi, &g) in groups.iter().enumerate() {
            for j in 0..c {
                let mut best = start;
                for r in start + 1..start + g {
                    if iv.data[r * c + j] > iv.data[best * c + j] {
                        best = r;
                    }
                }
                argmax[gi * c + j] = best;
                out.data[gi * c + j] = iv.data[best * c + j];
            }
            start += g;
        }
        self.push(out, Op::MaxPool { input, argmax })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `Σ_i w_i · CE(logits_i, targets_i) / normalizer` as a `1 x 1` value.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: &[f64],
        normalizer: f64,
    ) -> Result<Var> {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "one target per row");
        assert_eq!(lv.rows, weights.len(), "one weight per row");
        assert!(normalizer > 0.0, "normalizer must be positive");
        let mut probs = Tensor::zeros(lv.rows, lv.cols);
        let mut loss = 0.0;
        for r in 0..lv.rows {
            let row = lv.row(r);
            probs.row_mut(r).copy_from_slice(&super::softmax(row));
            loss += weights[r] * super::cross_entropy(row, targets[r])?;
        }
        Ok(self.push(
            Tensor::scalar(loss / normalizer),
            Op::SoftmaxCe { logits, probs, targets: targets.to_vec(), weights: weights.to_vec(), normalizer },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::new();

        fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
            grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
        }
        fn accum(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
            match &mut grads[v.0] {
                Some(g) => g.add_assign(&t),
                None => grads[v.0] = Some(t),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Param(p) => out.insert_or_add(*p, g),
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let bv = self.value(*b);
                    accum(&mut grads, *a, g.matmul_bt(bv));
                    let av = self.value(*a);
                    let gb = slot(&mut grads, *b, bv.shape());
                    av.matmul_at_into(&g, gb);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accum(&mut grads, *bias, gb);
                    accum(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accum(&mut grads, *b, g.clone());
                    accum(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = Tensor {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect(),
                    };
                    let gb = Tensor {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect(),
                    };
                    accum(&mut grads, *a, ga);
                    accum(&mut grads, *b, gb);
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(i));
                    let data = g.data.iter().zip(&y.data).map(|(d, y)| d * y * (1.0 - y)).collect();
                    accum(&mut grads, *a, Tensor { data, ..g });
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i));
                    let data = g.data.iter().zip(&y.data).map(|(d, y)| d * (1.0 - y * y)).collect();
                    accum(&mut grads, *a, Tensor { data, ..g });
                }
                Op::Scale(a, s) | Op::ScaleGrad(a, s) => {
                    let mut g = g;
                    g.scale_in_place(*s);
                    accum(&mut grads, *a, g);
                }
                Op::SliceCols(a, start) => {
                    let shape = self.shape(*a);
                    let ga = slot(&mut grads, *a, shape);
                    for r in 0..g.rows {
                        for (o, v) in ga.row_mut(r)[*start..*start + g.cols].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::SliceRows(a, start) => {
                    let shape = self.shape(*a);
                    let ga = slot(&mut grads, *a, shape);
                    let off = start * g.cols;
                    for (o, v) in ga.data[off..off + g.data.len()].iter_mut().zip(&g.data) {
                        *o += v;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let shape = self.shape(*p);
                        let gp = slot(&mut grads, *p, shape);
                        for r in 0..g.rows {
                            for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + shape.1]) {
                                *o += v;
                            }
                        }
                        off += shape.1;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let shape = self.shape(*p);
                        let n = shape.0 * shape.1;
                        let gp = slot(&mut grads, *p, shape);
                        for (o, v) in gp.data.iter_mut().zip(&g.data[off..off + n]) {
                            *o += v;
                        }
                        off += n;
                    }
                }
                Op::Gather(table, ids) => {
                    let shape = self.shape(*table);
                    let gt = slot(&mut grads, *table, shape);
                    for (r, id) in ids.iter().enumerate() {
                        if let Some(t) = id {
                            for (o, v) in gt.row_mut(*t).iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                    }
                }
                Op::Im2Col { input, window, blocks } => {
                    let shape = self.shape(*input);
                    let d = shape.1;
                    let gi = slot(&mut grads, *input, shape);
                    let (mut start, mut r) = (0, 0);
                    for &len in blocks {
                        for p in 0..len.max(*window) - window + 1 {
                            let row = g.row(r);
                            for k in 0..(*window).min(len.saturating_sub(p)) {
                                for (o, v) in gi.row_mut(start + p + k).iter_mut().zip(&row[k * d..(k + 1) * d]) {
                                    *o += v;
                                }
                            }
                            r += 1;
                        }
                        start += len;
                    }
                }
                Op::MaxPool { input, argmax } => {
                    let shape = self.shape(*input);
                    let c = shape.1;
                    let gi = slot(&mut grads, *input, shape);
                    for (k, &src) in argmax.iter().enumerate() {
                        gi.data[src * c + k % c] += g.data[k];
                    }
                }
                Op::Sum(a) => {
                    let shape = self.shape(*a);
                    let s = g.data[0];
                    accum(&mut grads, *a, Tensor::zeros(shape.0, shape.1).map(|_| s));
                }
                Op::SoftmaxCe { logits, probs, targets, weights, normalizer } => {
                    let s = g.data[0] / normalizer;
                    let mut gl = probs.clone();
                    for r in 0..gl.rows {
                        let w = weights[r] * s;
                        let row = gl.row_mut(r);
                        row[targets[r]] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= w;
                        }
                    }
                    accum(&mut grads, *logits, gl);
                }
            }
        }
        out
    }
}
