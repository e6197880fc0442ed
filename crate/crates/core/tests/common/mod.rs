//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the library routine it is used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pitmix::nn::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn rand_labels(rng: &mut impl Rng, t: usize, l: usize) -> Vec<usize> {
    (0..t).map(|_| rng.gen_range(0..l)).collect()
}

/// All permutations of `0..n` by Heap's algorithm (not lexicographic).
pub fn heap_permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            go(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        go(k - 1, a, out);
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    go(n, &mut a, &mut out);
    out
}

/// Frame-summed squared error, accumulated element by element in row-major order.
pub fn oracle_sq_err(a: &Tensor, b: &Tensor) -> f64 {
    let mut total = 0.0;
    for i in 0..a.data.len() {
        let d = a.data[i] - b.data[i];
        total += d * d;
    }
    total
}

/// Frame-summed cross entropy with a max-shifted log-sum-exp.
pub fn oracle_ce(logits: &Tensor, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        let row = logits.row(t);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        total += m + z.ln() - row[y];
    }
    total
}

/// Exhaustive minimum of `(1/S) sum_s cost[s][perm[s]]` and the
/// lexicographically smallest minimizer.
pub fn oracle_min_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let s = cost.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in heap_permutations(s) {
        let mut total = 0.0;
        for (stream, &r) in p.iter().enumerate() {
            total += cost[stream][r];
        }
        let loss = total * (1.0 / s as f64);
        best = match best {
            None => Some((loss, p)),
            Some((bl, bp)) => {
                if loss < bl || (loss == bl && p < bp) {
                    Some((loss, p))
                } else {
                    Some((bl, bp))
                }
            }
        };
    }
    best.unwrap()
}

pub fn oracle_mse_costs(outs: &[Tensor], tgts: &[Tensor]) -> Vec<Vec<f64>> {
    outs.iter()
        .map(|o| tgts.iter().map(|t| oracle_sq_err(o, t)).collect())
        .collect()
}

pub fn oracle_ce_costs(logits: &[Tensor], labels: &[Vec<usize>]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|o| labels.iter().map(|l| oracle_ce(o, l)).collect())
        .collect()
}

/// Every `(subs, dels, ins)` triple of a minimum-cost edit script turning
/// `reference` into `hyp`, found by enumerating all scripts; plus the cost.
pub fn oracle_edit_scripts(hyp: &[usize], reference: &[usize]) -> (usize, Vec<(usize, usize, usize)>) {
    fn go(
        h: &[usize],
        r: &[usize],
        acc: (usize, usize, usize),
        best: &mut usize,
        found: &mut Vec<(usize, usize, usize)>,
    ) {
        let cost = acc.0 + acc.1 + acc.2;
        if cost > *best {
            return;
        }
        if h.is_empty() && r.is_empty() {
            if cost < *best {
                *best = cost;
                found.clear();
            }
            if !found.contains(&acc) {
                found.push(acc);
            }
            return;
        }
        if !h.is_empty() && !r.is_empty() {
            let sub = usize::from(h[0] != r[0]);
            go(&h[1..], &r[1..], (acc.0 + sub, acc.1, acc.2), best, found);
        }
        if !r.is_empty() {
            go(h, &r[1..], (acc.0, acc.1 + 1, acc.2), best, found);
        }
        if !h.is_empty() {
            go(&h[1..], r, (acc.0, acc.1, acc.2 + 1), best, found);
        }
    }
    let mut best = hyp.len() + reference.len();
    let mut found = Vec::new();
    go(hyp, reference, (0, 0, 0), &mut best, &mut found);
    (best, found)
}

/// Plain edit distance by the textbook two-row recurrence.
pub fn oracle_distance(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Minimum total distance over all ways of giving each reference its own
/// hypothesis stream (`hyps.len() >= refs.len()`).
pub fn oracle_best_injection(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> usize {
    fn go(hyps: &[Vec<usize>], refs: &[Vec<usize>], used: &mut Vec<bool>, r: usize) -> usize {
        if r == refs.len() {
            return 0;
        }
        let mut best = usize::MAX;
        for h in 0..hyps.len() {
            if !used[h] {
                used[h] = true;
                let rest = go(hyps, refs, used, r + 1);
                best = best.min(oracle_distance(&hyps[h], &refs[r]) + rest);
                used[h] = false;
            }
        }
        best
    }
    go(hyps, refs, &mut vec![false; hyps.len()], 0)
}

/// Energy-ratio SNR of `target` over `g * interferer`, in dB.
pub fn measured_snr_db(target: &[f64], interferer: &[f64], g: f64) -> f64 {
    let et: f64 = target.iter().map(|v| v * v).sum();
    let ei: f64 = interferer.iter().map(|v| (g * v) * (g * v)).sum();
    10.0 * (et / ei).log10()
}

pub fn rand_waveform(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let amp = 10f64.powf(rng.gen_range(-3.0..0.0));
    (0..len).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

pub fn rand_units(rng: &mut impl Rng, max_len: usize, alphabet: usize) -> Vec<usize> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| rng.gen_range(1..=alphabet)).collect()
}
