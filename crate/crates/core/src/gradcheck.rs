//! Seeded finite-difference checks for every differentiable operation.
//!
//! Each case draws random shapes and values from `(seed, op, config)`,
//! reduces the operation's output to a scalar with a random quadratic probe
//! when it is not already scalar, and compares tape gradients against
//! central differences for every input.

use std::fmt::Write as _;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::derive_seed;
use crate::error::{Error, Result};
use crate::nn::fd::{analytic_grads, compare, numeric_grads, FD_STEP};
use crate::nn::{
    bidi_layer, linear, lstm_sequence, lstm_step, mse, softmax_ce, BidiParams, Graph, Initializer,
    LinearParams, LstmParams, ParamId, ParamSet, Tensor, Var,
};
use crate::pit;

/// Maximum accepted relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_CONFIGS: usize = 5;

/// Names of the checked operations, in table order.
pub const OPS: &[&str] = &[
    "matmul",
    "add_bias",
    "add",
    "mul",
    "sigmoid",
    "tanh",
    "scale",
    "cols",
    "concat_cols",
    "sum",
    "sq_dist",
    "softmax_ce_sum",
    "softmax_ce_masked",
    "lstm_seq",
    "lstm_seq_reverse",
    "lstm_step",
    "linear",
    "lstm_sequence",
    "bidi_layer",
    "softmax_ce",
    "mse",
    "fixed_mse_loss",
    "pit_mse_loss",
    "pit_ce_loss",
    "pit_ce_loss_forced",
];

type Build = Box<dyn Fn(&mut Graph) -> Result<Var>>;

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub configs: usize,
    pub max_rel_err: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub configs: usize,
    /// Perturbs the analytic gradient of this op (negative control).
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 0,
            configs: DEFAULT_CONFIGS,
            corrupt: None,
        }
    }
}

struct Case {
    params: ParamSet,
    build: Build,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("shape and data agree")
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(1..=4), rng.gen_range(1..=4))
}

/// `||x - probe||^2` for a fixed random probe of `x`'s shape.
fn probe(g: &mut Graph, x: Var, target: &Tensor) -> Result<Var> {
    let t = g.input(target.clone())?;
    g.sq_dist(x, t)
}

fn matrix_case<F>(rng: &mut ChaCha8Rng, inputs: &[[usize; 2]], out: [usize; 2], f: F) -> Case
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + 'static,
{
    let mut params = ParamSet::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(k, s)| params.add(format!("x{k}"), random(rng, s)))
        .collect();
    let target = random(rng, &out);
    Case {
        params,
        build: Box::new(move |g| {
            let xs: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let y = f(g, &xs)?;
            probe(g, y, &target)
        }),
    }
}

fn labels(rng: &mut ChaCha8Rng, t: usize, l: usize) -> Rc<[usize]> {
    (0..t).map(|_| rng.gen_range(0..l)).collect()
}

fn stream_params(rng: &mut ChaCha8Rng, s: usize, t: usize, d: usize) -> (ParamSet, Vec<ParamId>) {
    let mut params = ParamSet::new();
    let ids = (0..s)
        .map(|k| params.add(format!("out{k}"), random(rng, &[t, d])))
        .collect();
    (params, ids)
}

fn mse_pit_case(rng: &mut ChaCha8Rng, fixed: bool) -> Case {
    let s = rng.gen_range(2..=3);
    let (t, d) = dims(rng);
    let (params, ids) = stream_params(rng, s, t, d);
    let targets: Vec<Tensor> = (0..s).map(|_| random(rng, &[t, d])).collect();
    Case {
        params,
        build: Box::new(move |g| {
            let outs: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let tgts = targets
                .iter()
                .map(|x| g.input(x.clone()))
                .collect::<Result<Vec<_>>>()?;
            let (loss, _) = if fixed {
                pit::fixed_mse_loss(g, &outs, &tgts)?
            } else {
                pit::pit_mse_loss(g, &outs, &tgts)?
            };
            Ok(loss)
        }),
    }
}

fn ce_pit_case(rng: &mut ChaCha8Rng, forced: bool) -> Case {
    let s = rng.gen_range(2..=3);
    let t = rng.gen_range(1..=5);
    let l = rng.gen_range(2..=5);
    let (params, ids) = stream_params(rng, s, t, l);
    let labs: Vec<Rc<[usize]>> = (0..s).map(|_| labels(rng, t, l)).collect();
    let perm: Option<Vec<usize>> = forced.then(|| {
        let mut p: Vec<usize> = (0..s).collect();
        p.rotate_left(1);
        p
    });
    Case {
        params,
        build: Box::new(move |g| {
            let logits: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let (loss, _) = pit::pit_ce_loss(g, &logits, &labs, None, perm.as_deref())?;
            Ok(loss)
        }),
    }
}

fn build_case(op: &str, rng: &mut ChaCha8Rng) -> Result<Case> {
    let (m, n) = dims(rng);
    let k = rng.gen_range(1..=4);
    Ok(match op {
        "matmul" => matrix_case(rng, &[[m, k], [k, n]], [m, n], |g, x| g.matmul(x[0], x[1])),
        "add_bias" => {
            let mut params = ParamSet::new();
            let x = params.add("x", random(rng, &[m, n]));
            let b = params.add("b", random(rng, &[n]));
            let target = random(rng, &[m, n]);
            Case {
                params,
                build: Box::new(move |g| {
                    let (xv, bv) = (g.param(x), g.param(b));
                    let y = g.add_bias(xv, bv)?;
                    probe(g, y, &target)
                }),
            }
        }
        "add" => matrix_case(rng, &[[m, n], [m, n]], [m, n], |g, x| g.add(x[0], x[1])),
        "mul" => matrix_case(rng, &[[m, n], [m, n]], [m, n], |g, x| g.mul(x[0], x[1])),
        "sigmoid" => matrix_case(rng, &[[m, n]], [m, n], |g, x| g.sigmoid(x[0])),
        "tanh" => matrix_case(rng, &[[m, n]], [m, n], |g, x| g.tanh(x[0])),
        "scale" => {
            let c = rng.gen_range(-2.0..2.0);
            matrix_case(rng, &[[m, n]], [m, n], move |g, x| g.scale(x[0], c))
        }
        "cols" => {
            let w = n + 2;
            let lo = rng.gen_range(0..w);
            let hi = rng.gen_range(lo + 1..=w);
            matrix_case(rng, &[[m, w]], [m, hi - lo], move |g, x| g.cols(x[0], lo, hi))
        }
        "concat_cols" => {
            matrix_case(rng, &[[m, n], [m, k]], [m, n + k], |g, x| g.concat_cols(x[0], x[1]))
        }
        "sum" => {
            let terms = rng.gen_range(1..=4);
            let shapes = vec![[m, n]; terms];
            let mut params = ParamSet::new();
            let ids: Vec<ParamId> = shapes
                .iter()
                .enumerate()
                .map(|(i, s)| params.add(format!("x{i}"), random(rng, s)))
                .collect();
            let targets: Vec<Tensor> = (0..terms).map(|_| random(rng, &[m, n])).collect();
            Case {
                params,
                build: Box::new(move |g| {
                    let mut parts = Vec::new();
                    for (&id, t) in ids.iter().zip(&targets) {
                        let x = g.param(id);
                        parts.push(probe(g, x, t)?);
                    }
                    g.sum(&parts)
                }),
            }
        }
        "sq_dist" | "mse" => {
            let layer = op == "mse";
            matrix_case(rng, &[[m, n], [m, n]], [1, 1], move |g, x| {
                let d = if layer { mse(g, x[0], x[1])? } else { g.sq_dist(x[0], x[1])? };
                g.scale(d, 1.0)
            })
        }
        "softmax_ce_sum" | "softmax_ce_masked" | "softmax_ce" => {
            let l = n + 1;
            let labs = labels(rng, m, l);
            let mask: Option<Rc<[bool]>> = (op == "softmax_ce_masked").then(|| {
                let mut v: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.6)).collect();
                v[0] = true;
                v.into()
            });
            let mean = op == "softmax_ce";
            let mut params = ParamSet::new();
            let x = params.add("logits", random(rng, &[m, l]));
            Case {
                params,
                build: Box::new(move |g| {
                    let xv = g.param(x);
                    if mean {
                        softmax_ce(g, xv, &labs)
                    } else {
                        g.softmax_ce_sum(xv, labs.clone(), mask.clone())
                    }
                }),
            }
        }
        "lstm_seq" | "lstm_seq_reverse" => {
            let h = rng.gen_range(1..=3);
            let reverse = op == "lstm_seq_reverse";
            matrix_case(rng, &[[m, 4 * h], [h, 4 * h]], [m, h], move |g, x| {
                g.lstm_seq(x[0], x[1], reverse)
            })
        }
        "lstm_step" => {
            let h = rng.gen_range(1..=3);
            let mut params = ParamSet::new();
            let mut init = Initializer::new(rng.gen());
            let p = LstmParams::init(&mut params, &mut init, "cell", n, h);
            randomize(&mut params, rng);
            let x = params.add("x", random(rng, &[1, n]));
            let h0 = params.add("h", random(rng, &[1, h]));
            let c0 = params.add("c", random(rng, &[1, h]));
            let (th, tc) = (random(rng, &[1, h]), random(rng, &[1, h]));
            Case {
                params,
                build: Box::new(move |g| {
                    let (xv, hv, cv) = (g.param(x), g.param(h0), g.param(c0));
                    let (h1, c1) = lstm_step(g, xv, hv, cv, &p)?;
                    let a = probe(g, h1, &th)?;
                    let b = probe(g, c1, &tc)?;
                    g.sum(&[a, b])
                }),
            }
        }
        "linear" => layer_case(rng, m, n, k, |params, init, d_in, d_out| {
            let p = LinearParams::init(params, init, "lin", d_in, d_out);
            (Box::new(move |g: &mut Graph, x: Var| linear(g, x, &p)), d_out)
        }),
        "lstm_sequence" => {
            let h = rng.gen_range(1..=3);
            let reverse = rng.gen_bool(0.5);
            layer_case(rng, m, n, h, move |params, init, d_in, hd| {
                let p = LstmParams::init(params, init, "lstm", d_in, hd);
                (
                    Box::new(move |g: &mut Graph, x: Var| lstm_sequence(g, x, &p, reverse)),
                    hd,
                )
            })
        }
        "bidi_layer" => {
            let h = rng.gen_range(1..=3);
            layer_case(rng, m, n, h, |params, init, d_in, hd| {
                let p = BidiParams::init(params, init, "blstm", d_in, hd);
                (Box::new(move |g: &mut Graph, x: Var| bidi_layer(g, x, &p)), 2 * hd)
            })
        }
        "fixed_mse_loss" => mse_pit_case(rng, true),
        "pit_mse_loss" => mse_pit_case(rng, false),
        "pit_ce_loss" => ce_pit_case(rng, false),
        "pit_ce_loss_forced" => ce_pit_case(rng, true),
        other => return Err(Error::invalid(format!("unknown gradcheck op '{other}'"))),
    })
}

/// Replaces every parameter value with a draw from `[-1, 1)`.
fn randomize(params: &mut ParamSet, rng: &mut ChaCha8Rng) {
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
}

type LayerFn = Box<dyn Fn(&mut Graph, Var) -> Result<Var>>;

/// A layer applied to a trainable `t x d_in` input and probed.
fn layer_case<F>(rng: &mut ChaCha8Rng, t: usize, d_in: usize, width: usize, make: F) -> Case
where
    F: FnOnce(&mut ParamSet, &mut Initializer, usize, usize) -> (LayerFn, usize),
{
    let mut params = ParamSet::new();
    let mut init = Initializer::new(rng.gen());
    let (layer, d_out) = make(&mut params, &mut init, d_in, width);
    randomize(&mut params, rng);
    let x = params.add("x", random(rng, &[t, d_in]));
    let target = random(rng, &[t, d_out]);
    Case {
        params,
        build: Box::new(move |g| {
            let xv = g.param(x);
            let y = layer(g, xv)?;
            probe(g, y, &target)
        }),
    }
}

/// Relative error of one seeded configuration of `op`.
pub fn check_op(op: &str, seed: u64, config: usize, corrupt: bool) -> Result<f64> {
    let index = OPS
        .iter()
        .position(|&o| o == op)
        .ok_or_else(|| Error::invalid(format!("unknown gradcheck op '{op}'")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[index as u64, config as u64]));
    let case = build_case(op, &mut rng)?;
    let mut analytic = analytic_grads(&case.params, &case.build)?;
    if corrupt {
        let g = &mut analytic.grads[0][0];
        *g += 1e-2 * (1.0 + g.abs());
    }
    let numeric = numeric_grads(&case.params, &case.build, FD_STEP)?;
    Ok(compare(&analytic, &numeric))
}

/// Runs every op over `opts.configs` configurations.
pub fn run(opts: &GradcheckOptions) -> Result<Vec<OpCheck>> {
    if opts.configs == 0 {
        return Err(Error::invalid("gradcheck needs at least one configuration"));
    }
    if let Some(c) = &opts.corrupt {
        if !OPS.contains(&c.as_str()) {
            return Err(Error::invalid(format!("unknown gradcheck op '{c}'")));
        }
    }
    OPS.iter()
        .map(|&op| {
            let corrupt = opts.corrupt.as_deref() == Some(op);
            let mut worst = 0.0f64;
            for c in 0..opts.configs {
                worst = worst.max(check_op(op, opts.seed, c, corrupt)?);
            }
            Ok(OpCheck {
                op,
                configs: opts.configs,
                max_rel_err: worst,
            })
        })
        .collect()
}

/// Fixed-width table, one row per op.
pub fn format_table(checks: &[OpCheck]) -> String {
    let mut out = format!("{:<20} {:>7} {:>12}  result\n", "op", "configs", "max_rel_err");
    for c in checks {
        let _ = writeln!(
            out,
            "{:<20} {:>7} {:>12.3e}  {}",
            c.op,
            c.configs,
            c.max_rel_err,
            if c.passed() { "pass" } else { "FAIL" }
        );
    }
    out
}
