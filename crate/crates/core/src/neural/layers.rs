use rand::Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

/// Affine map `x·W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Dense {
            w: store.add_uniform(format!("{name}.w"), input, output, rng)?,
            b: store.add_zeros(format!("{name}.b"), 1, output)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let h = g.matmul(x, w);
        g.add_row(h, b)
    }
}

/// Single-direction LSTM, gates ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    /// Forget-gate biases start at 1, all others at 0.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_ih = store.add_uniform(format!("{name}.w_ih"), input, 4 * hidden, rng)?;
        let w_hh = store.add_uniform(format!("{name}.w_hh"), hidden, 4 * hidden, rng)?;
        let mut bias = Tensor::zeros(1, 4 * hidden);
        bias.data[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), bias)?;
        Ok(Lstm { w_ih, w_hh, b, hidden })
    }

    /// Runs over all rows of `x`, returning one hidden row per input row in
    /// input order.
    pub fn forward(&self, g: &mut Graph, x: Var, reverse: bool) -> Var {
        let n = g.shape(x).0;
        let h_dim = self.hidden;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b = g.param(self.b);
        let xw = g.matmul(x, w_ih);
        let xw = g.add_row(xw, b);
        let mut h = g.zeros(1, h_dim);
        let mut c = g.zeros(1, h_dim);
        let mut outputs = vec![h; n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let xt = g.slice_rows(xw, t, t + 1);
            let hh = g.matmul(h, w_hh);
            let gates = g.add(xt, hh);
            let i = g.slice_cols(gates, 0, h_dim);
            let i = g.sigmoid(i);
            let f = g.slice_cols(gates, h_dim, 2 * h_dim);
            let f = g.sigmoid(f);
            let cc = g.slice_cols(gates, 2 * h_dim, 3 * h_dim);
            let cc = g.tanh(cc);
            let o = g.slice_cols(gates, 3 * h_dim, 4 * h_dim);
            let o = g.sigmoid(o);
            let keep = g.mul(f, c);
            let write = g.mul(i, cc);
            c = g.add(keep, write);
            let tc = g.tanh(c);
            h = g.mul(o, tc);
            outputs[t] = h;
        }
        if n == 0 {
            return g.zeros(0, h_dim);
        }
        g.concat_rows(&outputs)
    }
}

/// Forward and backward LSTMs with concatenated outputs.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng)?,
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    /// Runs over the first `len` rows of `x` and pads the output with zero
    /// rows back to the height of `x`.
    pub fn forward(&self, g: &mut Graph, x: Var, len: usize) -> Var {
        let n = g.shape(x).0;
        let real = if len == n { x } else { g.slice_rows(x, 0, len) };
        let f = self.fwd.forward(g, real, false);
        let b = self.bwd.forward(g, real, true);
        let out = g.concat_cols(&[f, b]);
        if len == n {
            out
        } else {
            let pad = g.zeros(n - len, self.output_dim());
            g.concat_rows(&[out, pad])
        }
    }
}

/// 1-D convolution with max-pooling over time.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub window: usize,
    pub filters: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        window: usize,
        filters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Conv1d {
            w: store.add_uniform(format!("{name}.w"), window * input, filters, rng)?,
            b: store.add_zeros(format!("{name}.b"), 1, filters)?,
            window,
            filters,
        })
    }

    /// Convolves each block of rows independently and max-pools every block
    /// to a single `filters`-wide row. Blocks shorter than the window are
    /// zero-padded.
    pub fn forward_pooled(&self, g: &mut Graph, x: Var, blocks: &[usize]) -> Var {
        let cols = g.im2col(x, self.window, blocks);
        let w = g.param(self.w);
        let b = g.param(self.b);
        let h = g.matmul(cols, w);
        let h = g.add_row(h, b);
        let groups: Vec<usize> = blocks.iter().map(|&l| l.max(self.window) - self.window + 1).collect();
        g.max_pool(h, &groups)
    }
}

/// Inverted dropout: keeps each entry with probability `1 - p` and scales
/// kept entries by `1 / (1 - p)`. Identity outside training.
pub fn dropout<R: Rng + ?Sized>(g: &mut Graph, x: Var, p: f64, training: bool, rng: &mut R) -> Var {
    if p <= 0.0 || !training {
        return x;
    }
    let (r, c) = g.shape(x);
    let keep = 1.0 / (1.0 - p);
    let mask = (0..r * c).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    let m = g.input(Tensor { rows: r, cols: c, data: mask });
    g.mul(x, m)
}
