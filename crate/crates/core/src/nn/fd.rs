//! Central finite-difference checking of tape gradients.

use super::graph::{Graph, Var};
use super::params::{ParamGrads, ParamSet};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;

/// Norm-wise relative error `||a - n|| / (||a|| + ||n||)`; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
        + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Loss value of the graph built by `build` over `params`.
pub fn eval_loss<F>(params: &ParamSet, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = build(&mut g)?;
    Ok(g.value(loss).item())
}

pub fn analytic_grads<F>(params: &ParamSet, build: &F) -> Result<ParamGrads>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = build(&mut g)?;
    g.backward(loss)
}

pub fn numeric_grads<F>(params: &ParamSet, build: &F, step: f64) -> Result<ParamGrads>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut work = params.clone();
    let mut out = ParamGrads::zeros_like(params);
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = work.get(id).data[k];
            work.get_mut(id).data[k] = orig + step;
            let up = eval_loss(&work, build)?;
            work.get_mut(id).data[k] = orig - step;
            let down = eval_loss(&work, build)?;
            work.get_mut(id).data[k] = orig;
            out.grads[id.0][k] = (up - down) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Largest per-parameter relative error between analytic and numeric
/// gradients of the loss built by `build`.
pub fn max_relative_error<F>(params: &ParamSet, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = analytic_grads(params, build)?;
    let numeric = numeric_grads(params, build, FD_STEP)?;
    Ok(compare(&analytic, &numeric))
}

pub fn compare(analytic: &ParamGrads, numeric: &ParamGrads) -> f64 {
    analytic
        .grads
        .iter()
        .zip(&numeric.grads)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
