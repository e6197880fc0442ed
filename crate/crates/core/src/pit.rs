//! Permutation invariant training objectives.
//!
//! For `S` output streams and `S` reference streams, every assignment
//! `perm` (output stream `s` is scored against reference `perm[s]`) is
//! evaluated over the whole utterance, and the smallest total wins:
//!
//! ```text
//! J = (1/S) * min_perm  sum_s  cost(output_s, reference_perm[s])
//! ```
//!
//! `cost` is the frame-summed squared error for feature streams and the
//! frame-summed cross entropy for label streams. There is no division by the
//! frame count, so magnitudes scale with utterance length. Ties go to the
//! lexicographically smallest permutation. One assignment holds for the whole
//! utterance; there is no frame-level switching.
//!
//! Value-level functions (`fixed_mse`, `pit_mse`, `pit_ce`, ...) only score.
//! The `*_loss` variants also record the loss of the chosen assignment on a
//! [`Graph`] so gradients flow through that assignment alone.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{ce_sum_value, sq_dist_value, Graph, Var};
use crate::nn::Tensor;

pub const MAX_STREAMS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Mse,
    Ce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[s]` is the reference index scored against output stream `s`.
    pub perm: Vec<usize>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitResult {
    pub best: Assignment,
    /// Loss of every permutation, in lexicographic permutation order.
    pub all_losses: Vec<(Vec<usize>, f64)>,
    pub criterion: Criterion,
    /// True when `best` was imposed from outside (joint consistency) rather
    /// than minimized; `best.loss` may then exceed the minimum.
    pub forced: bool,
}

impl PitResult {
    /// Index of `best.perm` in lexicographic order.
    pub fn best_index(&self) -> usize {
        self.all_losses
            .iter()
            .position(|(p, _)| *p == self.best.perm)
            .expect("best permutation is always enumerated")
    }

    pub fn min_loss(&self) -> f64 {
        self.all_losses
            .iter()
            .map(|(_, l)| *l)
            .fold(f64::INFINITY, f64::min)
    }
}

/// All `S!` permutations of `0..S` in lexicographic order.
pub fn permutations(s: usize) -> Result<Vec<Vec<usize>>> {
    if s == 0 || s > MAX_STREAMS {
        return Err(Error::invalid(format!(
            "stream count {s} outside [1, {MAX_STREAMS}]"
        )));
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..s).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..s - 1).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..s).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    Ok(out)
}

/// Picks the minimum over a pairwise cost matrix `cost[s][r]`.
///
/// Each permutation's total is accumulated in stream order and scaled by
/// `1/S`, the same arithmetic used by the fixed-assignment losses, so the
/// selected loss equals the fixed loss at that permutation bit for bit.
pub fn select(cost: &[Vec<f64>], criterion: Criterion) -> Result<PitResult> {
    let s = cost.len();
    let scale = 1.0 / s as f64;
    let mut all = Vec::new();
    let mut best: Option<Assignment> = None;
    for perm in permutations(s)? {
        let mut total = 0.0;
        for (stream, &r) in perm.iter().enumerate() {
            total += cost[stream][r];
        }
        let loss = total * scale;
        if best.as_ref().is_none_or(|b| loss < b.loss) {
            best = Some(Assignment {
                perm: perm.clone(),
                loss,
            });
        }
        all.push((perm, loss));
    }
    Ok(PitResult {
        best: best.expect("at least one permutation"),
        all_losses: all,
        criterion,
        forced: false,
    })
}

fn check_streams(outputs: usize, targets: usize) -> Result<usize> {
    if outputs != targets {
        return Err(Error::shape(format!(
            "{outputs} output streams vs {targets} reference streams"
        )));
    }
    if outputs == 0 || outputs > MAX_STREAMS {
        return Err(Error::invalid(format!("stream count {outputs} out of range")));
    }
    Ok(outputs)
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "stream [{}x{}] vs reference [{}x{}]",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Pairwise frame-summed squared errors `cost[s][r]`.
pub fn mse_costs(outputs: &[Tensor], targets: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    check_streams(outputs.len(), targets.len())?;
    for o in outputs {
        for t in targets {
            check_same_shape(o, t)?;
        }
    }
    Ok(outputs
        .iter()
        .map(|o| targets.iter().map(|t| sq_dist_value(&o.data, &t.data)).collect())
        .collect())
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} frames",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::invalid(format!(
            "label {bad} outside [0, {})",
            logits.cols()
        )));
    }
    Ok(())
}

/// Pairwise frame-summed cross entropies `cost[s][r]`; `masks[r]` (if any)
/// selects the frames of reference `r` that count.
pub fn ce_costs(
    logits: &[Tensor],
    labels: &[Vec<usize>],
    masks: Option<&[Vec<bool>]>,
) -> Result<Vec<Vec<f64>>> {
    check_streams(logits.len(), labels.len())?;
    if let Some(m) = masks {
        if m.len() != labels.len() || m.iter().zip(labels).any(|(m, l)| m.len() != l.len()) {
            return Err(Error::shape("one mask per reference, one entry per frame"));
        }
    }
    for o in logits {
        for l in labels {
            check_labels(o, l)?;
        }
    }
    Ok(logits
        .iter()
        .map(|o| {
            labels
                .iter()
                .enumerate()
                .map(|(r, l)| ce_sum_value(o, l, masks.map(|m| m[r].as_slice())))
                .collect()
        })
        .collect())
}

fn identity_loss(cost: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (s, row) in cost.iter().enumerate() {
        total += row[s];
    }
    total * (1.0 / cost.len() as f64)
}

/// Fixed-order objective: output `s` is always scored against reference `s`.
pub fn fixed_mse(outputs: &[Tensor], targets: &[Tensor]) -> Result<f64> {
    check_streams(outputs.len(), targets.len())?;
    let mut total = 0.0;
    for (o, t) in outputs.iter().zip(targets) {
        check_same_shape(o, t)?;
        total += sq_dist_value(&o.data, &t.data);
    }
    Ok(total * (1.0 / outputs.len() as f64))
}

/// Fixed-order cross entropy, the CE counterpart of [`fixed_mse`].
pub fn fixed_ce(logits: &[Tensor], labels: &[Vec<usize>]) -> Result<f64> {
    check_streams(logits.len(), labels.len())?;
    let mut total = 0.0;
    for (o, l) in logits.iter().zip(labels) {
        check_labels(o, l)?;
        total += ce_sum_value(o, l, None);
    }
    Ok(total * (1.0 / logits.len() as f64))
}

pub fn pit_mse(outputs: &[Tensor], targets: &[Tensor]) -> Result<PitResult> {
    select(&mse_costs(outputs, targets)?, Criterion::Mse)
}

pub fn pit_ce(logits: &[Tensor], labels: &[Vec<usize>]) -> Result<PitResult> {
    pit_ce_masked(logits, labels, None)
}

pub fn pit_ce_masked(
    logits: &[Tensor],
    labels: &[Vec<usize>],
    masks: Option<&[Vec<bool>]>,
) -> Result<PitResult> {
    select(&ce_costs(logits, labels, masks)?, Criterion::Ce)
}

/// Re-anchors a result on a given permutation (joint consistency rule).
pub fn force(mut result: PitResult, perm: &[usize]) -> Result<PitResult> {
    let loss = result
        .all_losses
        .iter()
        .find(|(p, _)| p.as_slice() == perm)
        .map(|(_, l)| *l)
        .ok_or_else(|| Error::invalid(format!("{perm:?} is not a permutation of the streams")))?;
    result.best = Assignment {
        perm: perm.to_vec(),
        loss,
    };
    result.forced = true;
    Ok(result)
}

/// Separation objective `J1` and recognition objective `J2` of the jointly
/// trained system. With `consistent`, `J2` is evaluated under the assignment
/// chosen by `J1`; otherwise it is minimized on its own.
pub fn joint_objectives(
    sep_outputs: &[Tensor],
    sep_targets: &[Tensor],
    rec_logits: &[Tensor],
    rec_labels: &[Vec<usize>],
    consistent: bool,
) -> Result<(PitResult, PitResult)> {
    let s = check_streams(sep_outputs.len(), sep_targets.len())?;
    if check_streams(rec_logits.len(), rec_labels.len())? != s {
        return Err(Error::shape("separation and recognition stream counts differ"));
    }
    if sep_outputs[0].rows() != rec_logits[0].rows() {
        return Err(Error::shape("separation and recognition frame counts differ"));
    }
    let j1 = pit_mse(sep_outputs, sep_targets)?;
    let j2 = pit_ce(rec_logits, rec_labels)?;
    let j2 = if consistent {
        force(j2, &j1.best.perm)?
    } else {
        j2
    };
    Ok((j1, j2))
}

fn values(g: &Graph, vars: &[Var]) -> Vec<Tensor> {
    vars.iter().map(|&v| g.value(v).clone()).collect()
}

/// Records `(1/S) sum_s cost(output_s, target_perm[s])` on the tape.
fn mse_under(g: &mut Graph, outputs: &[Var], targets: &[Var], perm: &[usize]) -> Result<Var> {
    let mut terms = Vec::with_capacity(outputs.len());
    for (s, &r) in perm.iter().enumerate() {
        terms.push(g.sq_dist(outputs[s], targets[r])?);
    }
    let total = g.sum(&terms)?;
    g.scale(total, 1.0 / outputs.len() as f64)
}

/// Records the cross entropy of `logits` under `perm` on the tape.
pub fn ce_under(
    g: &mut Graph,
    logits: &[Var],
    labels: &[Rc<[usize]>],
    masks: Option<&[Rc<[bool]>]>,
    perm: &[usize],
) -> Result<Var> {
    let mut terms = Vec::with_capacity(logits.len());
    for (s, &r) in perm.iter().enumerate() {
        let mask = masks.map(|m| m[r].clone());
        terms.push(g.softmax_ce_sum(logits[s], labels[r].clone(), mask)?);
    }
    let total = g.sum(&terms)?;
    g.scale(total, 1.0 / logits.len() as f64)
}

/// Fixed-order MSE on the tape. Also returns the full assignment table for
/// diagnostics; `best` there is the identity, flagged as forced.
pub fn fixed_mse_loss(g: &mut Graph, outputs: &[Var], targets: &[Var]) -> Result<(Var, PitResult)> {
    let cost = mse_costs(&values(g, outputs), &values(g, targets))?;
    let identity: Vec<usize> = (0..outputs.len()).collect();
    let result = force(select(&cost, Criterion::Mse)?, &identity)?;
    debug_assert_eq!(result.best.loss, identity_loss(&cost));
    let loss = mse_under(g, outputs, targets, &identity)?;
    Ok((loss, result))
}

/// PIT-MSE on the tape: only the chosen assignment is recorded.
pub fn pit_mse_loss(g: &mut Graph, outputs: &[Var], targets: &[Var]) -> Result<(Var, PitResult)> {
    let result = pit_mse(&values(g, outputs), &values(g, targets))?;
    let loss = mse_under(g, outputs, targets, &result.best.perm)?;
    Ok((loss, result))
}

/// PIT-CE on the tape. With `forced_perm`, the assignment is imposed instead
/// of minimized.
pub fn pit_ce_loss(
    g: &mut Graph,
    logits: &[Var],
    labels: &[Rc<[usize]>],
    masks: Option<&[Rc<[bool]>]>,
    forced_perm: Option<&[usize]>,
) -> Result<(Var, PitResult)> {
    let owned: Vec<Vec<usize>> = labels.iter().map(|l| l.to_vec()).collect();
    let owned_masks: Option<Vec<Vec<bool>>> = masks.map(|m| m.iter().map(|x| x.to_vec()).collect());
    let result = pit_ce_masked(&values(g, logits), &owned, owned_masks.as_deref())?;
    let result = match forced_perm {
        Some(p) => force(result, p)?,
        None => result,
    };
    let loss = ce_under(g, logits, labels, masks, &result.best.perm)?;
    Ok((loss, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamSet;

    fn t(rows: usize, cols: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, d.to_vec()).unwrap()
    }

    #[test]
    fn permutation_lists() {
        assert_eq!(permutations(1).unwrap(), vec![vec![0]]);
        assert_eq!(permutations(2).unwrap(), vec![vec![0, 1], vec![1, 0]]);
        let p3 = permutations(3).unwrap();
        assert_eq!(p3.len(), 6);
        assert_eq!(p3[1], vec![0, 2, 1]);
        assert_eq!(p3[5], vec![2, 1, 0]);
        assert_eq!(permutations(6).unwrap().len(), 720);
        assert!(permutations(0).is_err());
        assert!(permutations(7).is_err());
    }

    #[test]
    fn fixed_mse_cases() {
        let a = [t(1, 2, &[1., 1.]), t(1, 2, &[0., 0.])];
        assert_eq!(fixed_mse(&a, &a).unwrap(), 0.0);
        // per-stream sums 2 and 4
        let out = [t(1, 2, &[1., 1.]), t(1, 2, &[2., 0.])];
        let tgt = [t(1, 2, &[0., 0.]), t(1, 2, &[0., 0.])];
        assert_eq!(fixed_mse(&out, &tgt).unwrap(), 3.0);
        assert!(fixed_mse(&out, &[t(1, 2, &[0., 0.])]).is_err());
        assert!(fixed_mse(&out, &[t(2, 1, &[0., 0.]), t(1, 2, &[0., 0.])]).is_err());
    }

    #[test]
    fn pit_mse_finds_swap() {
        let out = [t(1, 1, &[0.]), t(1, 1, &[1.])];
        let tgt = [t(1, 1, &[1.]), t(1, 1, &[0.])];
        let r = pit_mse(&out, &tgt).unwrap();
        assert_eq!(r.best.perm, vec![1, 0]);
        assert_eq!(r.best.loss, 0.0);
        assert_eq!(r.all_losses.len(), 2);
        let r = pit_mse(&out, &out).unwrap();
        assert_eq!(r.best.perm, vec![0, 1]);
        assert_eq!(r.best.loss, 0.0);
    }

    #[test]
    fn pit_ce_uniform_ties_to_identity() {
        let logits = [Tensor::zeros(&[3, 4]), Tensor::zeros(&[3, 4])];
        let labels = [vec![0, 1, 2], vec![3, 3, 0]];
        let r = pit_ce(&logits, &labels).unwrap();
        for (_, l) in &r.all_losses {
            assert!((l - 3.0 * 4f64.ln()).abs() < 1e-12);
        }
        assert_eq!(r.best.perm, vec![0, 1]);
    }

    #[test]
    fn pit_ce_swapped_one_hot() {
        let one_hot = |labels: &[usize]| {
            let mut d = vec![0.0; labels.len() * 4];
            for (i, &y) in labels.iter().enumerate() {
                d[i * 4 + y] = 40.0;
            }
            t(labels.len(), 4, &d)
        };
        let labels = [vec![0, 1, 1], vec![2, 3, 3]];
        let logits = [one_hot(&labels[1]), one_hot(&labels[0])];
        let r = pit_ce(&logits, &labels).unwrap();
        assert_eq!(r.best.perm, vec![1, 0]);
        assert!(r.best.loss < 1e-12);
        assert!(pit_ce(&logits, &[vec![0, 1, 4], vec![0, 0, 0]]).is_err());
        assert!(pit_ce(&logits, &[vec![0, 1], vec![0, 0]]).is_err());
    }

    #[test]
    fn masked_ce_skips_frames() {
        let logits = [Tensor::zeros(&[2, 4]), Tensor::zeros(&[2, 4])];
        let labels = [vec![0, 1], vec![0, 2]];
        let masks = [vec![true, false], vec![false, false]];
        let r = pit_ce_masked(&logits, &labels, Some(&masks)).unwrap();
        assert!((r.best.loss - 0.5 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn joint_consistency() {
        let sep_t = [t(1, 1, &[1.]), t(1, 1, &[0.])];
        let sep_o = [t(1, 1, &[0.]), t(1, 1, &[1.])];
        // CE prefers identity
        let mut d0 = vec![0.0; 4];
        d0[0] = 30.0;
        let mut d1 = vec![0.0; 4];
        d1[1] = 30.0;
        let logits = [t(1, 4, &d0), t(1, 4, &d1)];
        let labels = [vec![0], vec![1]];
        let (j1, j2) = joint_objectives(&sep_o, &sep_t, &logits, &labels, true).unwrap();
        assert_eq!(j1.best.perm, vec![1, 0]);
        assert_eq!(j2.best.perm, vec![1, 0]);
        assert!(j2.forced);
        let (j1, j2) = joint_objectives(&sep_o, &sep_t, &logits, &labels, false).unwrap();
        assert_eq!(j1.best.perm, vec![1, 0]);
        assert_eq!(j2.best.perm, vec![0, 1]);

        let labels_swapped = [vec![1], vec![0]];
        let swapped_logits = [t(1, 4, &d1), t(1, 4, &d0)];
        let (j1, j2) =
            joint_objectives(&sep_t, &sep_t, &swapped_logits, &labels_swapped, true).unwrap();
        assert_eq!(j1.best.loss, 0.0);
        assert!(j2.best.loss < 1e-12);
        assert!(joint_objectives(&sep_o, &sep_t, &logits[..1], &labels[..1], true).is_err());
    }

    #[test]
    fn tape_loss_matches_selected_value() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let outs: Vec<Var> = [[0.3, 1.0], [2.0, -1.0], [0.0, 0.5]]
            .iter()
            .map(|r| g.input(t(1, 2, r)).unwrap())
            .collect();
        let tgts: Vec<Var> = [[2.1, -0.9], [0.1, 0.4], [0.2, 1.1]]
            .iter()
            .map(|r| g.input(t(1, 2, r)).unwrap())
            .collect();
        let (loss, r) = pit_mse_loss(&mut g, &outs, &tgts).unwrap();
        assert_eq!(r.best.perm, vec![2, 0, 1]);
        assert_eq!(g.value(loss).item(), r.best.loss);
        let (fixed, fr) = fixed_mse_loss(&mut g, &outs, &tgts).unwrap();
        assert_eq!(g.value(fixed).item(), fr.best.loss);
        assert!(r.best.loss < fr.best.loss);
    }
}
