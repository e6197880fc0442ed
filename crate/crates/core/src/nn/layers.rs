//! Parameterized layers built on top of the tape.

use std::rc::Rc;

use super::graph::{Graph, Var};
use super::params::{Initializer, ParamId, ParamSet, FORGET_BIAS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearParams {
    /// `in_dim x out_dim`
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearParams {
    pub fn init(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = params.add(format!("{name}.w"), init.uniform(&[in_dim, out_dim]));
        let bias = params.add(format!("{name}.b"), init.uniform(&[out_dim]));
        LinearParams {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn num_scalars(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }
}

/// Row-wise affine map `x W + b`.
pub fn linear(g: &mut Graph, x: Var, p: &LinearParams) -> Result<Var> {
    if g.value(x).cols() != p.in_dim {
        return Err(Error::shape(format!(
            "linear expects {} input columns, got {}",
            p.in_dim,
            g.value(x).cols()
        )));
    }
    let w = g.param(p.weight);
    let b = g.param(p.bias);
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

/// One LSTM direction. Gate column order is `i f g o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    /// `in_dim x 4H`
    pub w_input: ParamId,
    /// `H x 4H`
    pub w_hidden: ParamId,
    /// `4H`
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn init(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        let w_input = params.add(format!("{name}.wx"), init.uniform(&[in_dim, 4 * hidden]));
        let w_hidden = params.add(format!("{name}.wh"), init.uniform(&[hidden, 4 * hidden]));
        let mut b = init.uniform(&[4 * hidden]);
        b.data[hidden..2 * hidden].fill(FORGET_BIAS);
        let bias = params.add(format!("{name}.b"), b);
        LstmParams {
            w_input,
            w_hidden,
            bias,
            in_dim,
            hidden,
        }
    }

    pub fn num_scalars(in_dim: usize, hidden: usize) -> usize {
        4 * hidden * (in_dim + hidden + 1)
    }
}

/// A single LSTM cell update built from elementary tape operations.
///
/// `x_t` is `1 x in_dim`; `h` and `c` are `1 x H`. Returns `(h', c')`.
pub fn lstm_step(g: &mut Graph, x_t: Var, h: Var, c: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hd = p.hidden;
    if g.value(x_t).cols() != p.in_dim || g.value(h).cols() != hd || g.value(c).cols() != hd {
        return Err(Error::shape("lstm_step width mismatch"));
    }
    let wx = g.param(p.w_input);
    let wh = g.param(p.w_hidden);
    let b = g.param(p.bias);
    let xw = g.matmul(x_t, wx)?;
    let hw = g.matmul(h, wh)?;
    let pre = g.add(xw, hw)?;
    let pre = g.add_bias(pre, b)?;
    let i_pre = g.cols(pre, 0, hd)?;
    let f_pre = g.cols(pre, hd, 2 * hd)?;
    let c_pre = g.cols(pre, 2 * hd, 3 * hd)?;
    let o_pre = g.cols(pre, 3 * hd, 4 * hd)?;
    let i_gate = g.sigmoid(i_pre)?;
    let f_gate = g.sigmoid(f_pre)?;
    let cand = g.tanh(c_pre)?;
    let o_gate = g.sigmoid(o_pre)?;
    let keep = g.mul(f_gate, c)?;
    let write = g.mul(i_gate, cand)?;
    let c_new = g.add(keep, write)?;
    let squashed = g.tanh(c_new)?;
    let h_new = g.mul(o_gate, squashed)?;
    Ok((h_new, c_new))
}

/// Full-sequence pass of one LSTM direction from a zero state (`T x H`).
pub fn lstm_sequence(g: &mut Graph, x: Var, p: &LstmParams, reverse: bool) -> Result<Var> {
    if g.value(x).cols() != p.in_dim {
        return Err(Error::shape(format!(
            "lstm expects {} input columns, got {}",
            p.in_dim,
            g.value(x).cols()
        )));
    }
    let wx = g.param(p.w_input);
    let wh = g.param(p.w_hidden);
    let b = g.param(p.bias);
    let xw = g.matmul(x, wx)?;
    let xw = g.add_bias(xw, b)?;
    g.lstm_seq(xw, wh, reverse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BidiParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BidiParams {
    pub fn init(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        BidiParams {
            forward: LstmParams::init(params, init, &format!("{name}.fw"), in_dim, hidden),
            backward: LstmParams::init(params, init, &format!("{name}.bw"), in_dim, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn num_scalars(in_dim: usize, hidden: usize) -> usize {
        2 * LstmParams::num_scalars(in_dim, hidden)
    }
}

/// Bidirectional layer: `[forward | backward]` hidden states per frame.
pub fn bidi_layer(g: &mut Graph, x: Var, p: &BidiParams) -> Result<Var> {
    if g.value(x).rows() == 0 {
        return Err(Error::shape("bidirectional layer needs T >= 1"));
    }
    let fw = lstm_sequence(g, x, &p.forward, false)?;
    let bw = lstm_sequence(g, x, &p.backward, true)?;
    g.concat_cols(fw, bw)
}

/// Mean per-frame cross entropy of `logits` (`T x L`) against `labels`.
pub fn softmax_ce(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let t_len = labels.len();
    let total = g.softmax_ce_sum(logits, Rc::from(labels), None)?;
    g.scale(total, 1.0 / t_len as f64)
}

/// `sum_t ||a_t - b_t||^2`.
pub fn mse(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    g.sq_dist(a, b)
}
