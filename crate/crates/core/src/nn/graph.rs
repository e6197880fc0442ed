//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are
//! appended in evaluation order, so [`Graph::backward`] walks the tape in
//! exact reverse and each node's gradient is consumed once, after all of its
//! consumers have contributed to it.
//!
//! Parameters are borrowed from a [`ParamSet`] rather than copied; the tape
//! only records which parameter a leaf refers to.

use std::rc::Rc;

use super::params::{ParamGrads, ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Cols(Var, usize, usize),
    ConcatCols(Var, Var),
    Scale(Var, f64),
    Sum(Vec<Var>),
    SqDist(Var, Var),
    SoftmaxCe {
        logits: Var,
        labels: Rc<[usize]>,
        mask: Option<Rc<[bool]>>,
    },
    LstmSeq {
        xw: Var,
        wh: Var,
        reverse: bool,
    },
}

#[derive(Debug, Default)]
enum Cache {
    #[default]
    None,
    /// Row-wise softmax probabilities.
    Probs(Vec<f64>),
    /// Per processed step: gate activations `[i f g o]` (4H) and cell state (H).
    Lstm { gates: Vec<f64>, cells: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    cache: Cache,
}

/// Gradients for every node of a tape, indexed by [`Var`].
pub struct NodeGrads {
    grads: Vec<Option<Vec<f64>>>,
}

impl NodeGrads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    param_nodes: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    fn push(&mut self, op: Op, value: Tensor, cache: Cache) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{op:?}")));
        }
        self.nodes.push(Node { op, value, cache });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Input, t, Cache::None)
    }

    /// Leaf for a model parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Tensor::zeros(&[0]),
            cache: Cache::None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(Error::shape(format!(
                "matmul [{m}x{k}] x [{}x{n}]",
                tb.rows()
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &aip) in ta.row(i).iter().enumerate() {
                if aip != 0.0 {
                    axpy(aip, tb.row(p), orow);
                }
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        self.push(Op::MatMul(a, b), t, Cache::None)
    }

    /// Adds a length-`n` bias to every row of an `m x n` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.len() != tx.cols() {
            return Err(Error::shape(format!(
                "bias of {} for {} columns",
                tb.len(),
                tx.cols()
            )));
        }
        let mut data = tx.data.clone();
        for row in data.chunks_mut(tb.len()) {
            axpy(1.0, &tb.data, row);
        }
        let t = Tensor::matrix(tx.rows(), tx.cols(), data)?;
        self.push(Op::AddBias(x, b), t, Cache::None)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(Error::shape(format!(
                "{what}: [{}x{}] vs [{}x{}]",
                ta.rows(),
                ta.cols(),
                tb.rows(),
                tb.cols()
            )));
        }
        Ok(())
    }

    fn elementwise(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        Tensor {
            shape: vec![ta.rows(), ta.cols()],
            data,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let t = self.elementwise(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), t, Cache::None)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let t = self.elementwise(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), t, Cache::None)
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let tx = self.value(x);
        Tensor {
            shape: tx.shape.clone(),
            data: tx.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, sigmoid);
        self.push(Op::Sigmoid(x), t, Cache::None)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = self.map(x, f64::tanh);
        self.push(Op::Tanh(x), t, Cache::None)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let t = self.map(x, |v| v * k);
        self.push(Op::Scale(x, k), t, Cache::None)
    }

    /// Column slice `[lo, hi)` of a matrix.
    pub fn cols(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var> {
        let tx = self.value(x);
        if lo >= hi || hi > tx.cols() {
            return Err(Error::shape(format!(
                "column slice {lo}..{hi} of {} columns",
                tx.cols()
            )));
        }
        let mut data = Vec::with_capacity(tx.rows() * (hi - lo));
        for r in 0..tx.rows() {
            data.extend_from_slice(&tx.row(r)[lo..hi]);
        }
        let t = Tensor::matrix(tx.rows(), hi - lo, data)?;
        self.push(Op::Cols(x, lo, hi), t, Cache::None)
    }

    /// Row-wise concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::shape(format!(
                "concat of {} and {} rows",
                ta.rows(),
                tb.rows()
            )));
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let t = Tensor::matrix(ta.rows(), ta.cols() + tb.cols(), data)?;
        self.push(Op::ConcatCols(a, b), t, Cache::None)
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &x in xs {
            let t = self.value(x);
            if t.len() != 1 {
                return Err(Error::shape("sum expects scalar operands"));
            }
            total += t.item();
        }
        self.push(Op::Sum(xs.to_vec()), Tensor::scalar(total), Cache::None)
    }

    /// `sum_t ||a_t - b_t||^2` over all rows.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "squared distance")?;
        let total = sq_dist_value(&self.value(a).data, &self.value(b).data);
        self.push(Op::SqDist(a, b), Tensor::scalar(total), Cache::None)
    }

    /// Frame-summed cross entropy `-sum_t log softmax(logits_t)[label_t]`.
    ///
    /// Frames with `mask[t] == false` are skipped.
    pub fn softmax_ce_sum(
        &mut self,
        logits: Var,
        labels: Rc<[usize]>,
        mask: Option<Rc<[bool]>>,
    ) -> Result<Var> {
        let tl = self.value(logits);
        let (t_len, l) = (tl.rows(), tl.cols());
        if labels.len() != t_len {
            return Err(Error::shape(format!(
                "{} labels for {} frames",
                labels.len(),
                t_len
            )));
        }
        if let Some(m) = &mask {
            if m.len() != t_len {
                return Err(Error::shape("mask length differs from frame count"));
            }
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= l) {
            return Err(Error::invalid(format!("label {bad} outside [0, {l})")));
        }
        let mut probs = Vec::with_capacity(t_len * l);
        for t in 0..t_len {
            probs.extend(softmax_row(tl.row(t)).0);
        }
        let total = ce_sum_value(tl, &labels, mask.as_deref());
        self.push(
            Op::SoftmaxCe {
                logits,
                labels,
                mask,
            },
            Tensor::scalar(total),
            Cache::Probs(probs),
        )
    }

    /// Whole-sequence LSTM recurrence for one direction.
    ///
    /// `xw` holds the input projection plus bias for every frame (`T x 4H`),
    /// `wh` the recurrent weights (`H x 4H`), gate column order `i f g o`.
    /// The state starts at zero; `reverse` runs right to left. Output row `t`
    /// is the hidden state at frame `t`.
    pub fn lstm_seq(&mut self, xw: Var, wh: Var, reverse: bool) -> Result<Var> {
        let (txw, twh) = (self.value(xw), self.value(wh));
        let h = twh.rows();
        if twh.cols() != 4 * h || txw.cols() != 4 * h {
            return Err(Error::shape(format!(
                "lstm: recurrent [{}x{}], projections {} wide",
                twh.rows(),
                twh.cols(),
                txw.cols()
            )));
        }
        let t_len = txw.rows();
        let mut gates = vec![0.0; t_len * 4 * h];
        let mut cells = vec![0.0; t_len * h];
        let mut out = vec![0.0; t_len * h];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut pre = vec![0.0; 4 * h];
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            pre.copy_from_slice(txw.row(t));
            for (p, &hp) in h_prev.iter().enumerate() {
                if hp != 0.0 {
                    axpy(hp, twh.row(p), &mut pre);
                }
            }
            let g = &mut gates[step * 4 * h..(step + 1) * 4 * h];
            for j in 0..h {
                let i_g = sigmoid(pre[j]);
                let f_g = sigmoid(pre[h + j]);
                let c_g = pre[2 * h + j].tanh();
                let o_g = sigmoid(pre[3 * h + j]);
                g[j] = i_g;
                g[h + j] = f_g;
                g[2 * h + j] = c_g;
                g[3 * h + j] = o_g;
                let c = f_g * c_prev[j] + i_g * c_g;
                cells[step * h + j] = c;
                c_prev[j] = c;
                h_prev[j] = o_g * c.tanh();
            }
            out[t * h..(t + 1) * h].copy_from_slice(&h_prev);
        }
        let t = Tensor::matrix(t_len, h, out)?;
        self.push(
            Op::LstmSeq { xw, wh, reverse },
            t,
            Cache::Lstm { gates, cells },
        )
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward_nodes(&self, loss: Var) -> Result<NodeGrads> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (idx, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "gradient of {:?}",
                        self.nodes[idx].op
                    )));
                }
            }
        }
        Ok(NodeGrads { grads })
    }

    /// Gradients of the scalar `loss` with respect to the parameters.
    pub fn backward(&self, loss: Var) -> Result<ParamGrads> {
        let node_grads = self.backward_nodes(loss)?;
        let mut out = ParamGrads::zeros_like(self.params);
        for (pid, v) in self.param_nodes.iter().enumerate() {
            if let Some(v) = v {
                if let Some(g) = node_grads.get(*v) {
                    out.grads[pid].copy_from_slice(g);
                }
            }
        }
        Ok(out)
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let len = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] += dot(grow, tb.row(p));
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for (p, &aip) in ta.row(i).iter().enumerate() {
                            if aip != 0.0 {
                                axpy(aip, grow, &mut gb[p * n..(p + 1) * n]);
                            }
                        }
                    }
                });
            }
            Op::AddBias(x, b) => {
                acc(*x, &mut |gx| axpy(1.0, g, gx));
                let n = self.value(*b).len();
                acc(*b, &mut |gb| {
                    for row in g.chunks(n) {
                        axpy(1.0, row, gb);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| axpy(1.0, g, ga));
                acc(*b, &mut |gb| axpy(1.0, g, gb));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for ((x, gi), y) in ga.iter_mut().zip(g).zip(&tb.data) {
                        *x += gi * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((x, gi), y) in gb.iter_mut().zip(g).zip(&ta.data) {
                        *x += gi * y;
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value.data;
                acc(*x, &mut |gx| {
                    for ((d, gi), s) in gx.iter_mut().zip(g).zip(y) {
                        *d += gi * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value.data;
                acc(*x, &mut |gx| {
                    for ((d, gi), t) in gx.iter_mut().zip(g).zip(y) {
                        *d += gi * (1.0 - t * t);
                    }
                });
            }
            Op::Scale(x, k) => acc(*x, &mut |gx| axpy(*k, g, gx)),
            Op::Cols(x, lo, hi) => {
                let cols = self.value(*x).cols();
                let w = hi - lo;
                acc(*x, &mut |gx| {
                    for (r, grow) in g.chunks(w).enumerate() {
                        axpy(1.0, grow, &mut gx[r * cols + lo..r * cols + hi]);
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                acc(*a, &mut |ga| {
                    for (r, grow) in g.chunks(ca + cb).enumerate() {
                        axpy(1.0, &grow[..ca], &mut ga[r * ca..(r + 1) * ca]);
                    }
                });
                acc(*b, &mut |gb| {
                    for (r, grow) in g.chunks(ca + cb).enumerate() {
                        axpy(1.0, &grow[ca..], &mut gb[r * cb..(r + 1) * cb]);
                    }
                });
            }
            Op::Sum(xs) => {
                for x in xs {
                    acc(*x, &mut |gx| gx[0] += g[0]);
                }
            }
            Op::SqDist(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for ((d, x), y) in ga.iter_mut().zip(&ta.data).zip(&tb.data) {
                        *d += 2.0 * g[0] * (x - y);
                    }
                });
                acc(*b, &mut |gb| {
                    for ((d, x), y) in gb.iter_mut().zip(&ta.data).zip(&tb.data) {
                        *d -= 2.0 * g[0] * (x - y);
                    }
                });
            }
            Op::SoftmaxCe {
                logits,
                labels,
                mask,
            } => {
                let Cache::Probs(probs) = &node.cache else {
                    unreachable!("softmax node without cached probabilities")
                };
                let l = self.value(*logits).cols();
                acc(*logits, &mut |gl| {
                    for (t, &y) in labels.iter().enumerate() {
                        if mask.as_ref().is_none_or(|m| m[t]) {
                            let row = &mut gl[t * l..(t + 1) * l];
                            axpy(g[0], &probs[t * l..(t + 1) * l], row);
                            row[y] -= g[0];
                        }
                    }
                });
            }
            Op::LstmSeq { xw, wh, reverse } => {
                let Cache::Lstm { gates, cells } = &node.cache else {
                    unreachable!("lstm node without cached gates")
                };
                self.backprop_lstm(*xw, *wh, *reverse, gates, cells, g, &mut acc);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_lstm(
        &self,
        xw: Var,
        wh: Var,
        reverse: bool,
        gates: &[f64],
        cells: &[f64],
        g_out: &[f64],
        acc: &mut dyn FnMut(Var, &mut dyn FnMut(&mut [f64])),
    ) {
        let twh = self.value(wh);
        let h = twh.rows();
        let t_len = self.value(xw).rows();
        let mut d_pre_all = vec![0.0; t_len * 4 * h];
        let mut d_wh = vec![0.0; h * 4 * h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut d_pre = vec![0.0; 4 * h];
        for step in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - step } else { step };
            let gt = &gates[step * 4 * h..(step + 1) * 4 * h];
            let c = &cells[step * h..(step + 1) * h];
            let c_prev = (step > 0).then(|| &cells[(step - 1) * h..step * h]);
            for j in 0..h {
                let (i_g, f_g, c_g, o_g) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = c[j].tanh();
                let dh = g_out[t * h + j] + dh_next[j];
                let dc = dc_next[j] + dh * o_g * (1.0 - tc * tc);
                let cp = c_prev.map_or(0.0, |cp| cp[j]);
                d_pre[j] = dc * c_g * i_g * (1.0 - i_g);
                d_pre[h + j] = dc * cp * f_g * (1.0 - f_g);
                d_pre[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                d_pre[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            d_pre_all[t * 4 * h..(t + 1) * 4 * h].copy_from_slice(&d_pre);
            if step > 0 {
                let h_prev = hidden_at(h, gates, cells, step - 1);
                for (p, &hp) in h_prev.iter().enumerate() {
                    if hp != 0.0 {
                        axpy(hp, &d_pre, &mut d_wh[p * 4 * h..(p + 1) * 4 * h]);
                    }
                }
                for (p, dh) in dh_next.iter_mut().enumerate() {
                    *dh = dot(twh.row(p), &d_pre);
                }
            } else {
                dh_next.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        acc(xw, &mut |gx| axpy(1.0, &d_pre_all, gx));
        acc(wh, &mut |gw| axpy(1.0, &d_wh, gw));
    }

}

/// Hidden state after processed step `step`, rebuilt from the cache.
fn hidden_at(h: usize, gates: &[f64], cells: &[f64], step: usize) -> Vec<f64> {
    (0..h)
        .map(|j| gates[step * 4 * h + 3 * h + j] * cells[step * h + j].tanh())
        .collect()
}

/// Frame-summed cross entropy of a `T x L` logit matrix, skipping frames
/// whose mask entry is false. Labels must be in range.
pub fn ce_sum_value(logits: &Tensor, labels: &[usize], mask: Option<&[bool]>) -> f64 {
    let mut total = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        if mask.is_none_or(|m| m[t]) {
            let row = logits.row(t);
            total += softmax_row(row).1 - row[y];
        }
    }
    total
}

pub fn sq_dist_value(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Softmax of one row and its log-sum-exp, stabilized by max subtraction.
pub fn softmax_row(row: &[f64]) -> (Vec<f64>, f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / z).collect(), max + z.ln())
}
