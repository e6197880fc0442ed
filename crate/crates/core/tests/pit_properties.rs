mod common;

use std::rc::Rc;

use proptest::prelude::*;

use common::*;
use pitmix::nn::{Graph, ParamSet, Tensor};
use pitmix::pit;

fn streams(seed: u64, s: usize, t: usize, d: usize) -> (Vec<Tensor>, Vec<Tensor>) {
    let mut r = rng(seed);
    let outs = (0..s).map(|_| rand_tensor(&mut r, t, d)).collect();
    let tgts = (0..s).map(|_| rand_tensor(&mut r, t, d)).collect();
    (outs, tgts)
}

fn ce_streams(seed: u64, s: usize, t: usize, l: usize) -> (Vec<Tensor>, Vec<Vec<usize>>) {
    let mut r = rng(seed);
    let logits = (0..s).map(|_| rand_tensor(&mut r, t, l)).collect();
    let labels = (0..s).map(|_| rand_labels(&mut r, t, l)).collect();
    (logits, labels)
}

/// `tgts'[j] = tgts[pi[j]]`.
fn permute<T: Clone>(xs: &[T], pi: &[usize]) -> Vec<T> {
    pi.iter().map(|&j| xs[j].clone()).collect()
}

fn inverse(pi: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; pi.len()];
    for (j, &p) in pi.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

fn unique_minimum(r: &pit::PitResult) -> bool {
    r.all_losses.iter().filter(|(_, l)| (l - r.best.loss).abs() <= 1e-12).count() == 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mse_matches_exhaustive_minimum(seed: u64, s in 1usize..=4, t in 1usize..6, d in 1usize..4) {
        let (outs, tgts) = streams(seed, s, t, d);
        let got = pit::pit_mse(&outs, &tgts).unwrap();
        let (loss, perm) = oracle_min_assignment(&oracle_mse_costs(&outs, &tgts));
        prop_assert_eq!(got.best.loss, loss);
        prop_assert_eq!(got.best.perm, perm);
    }

    #[test]
    fn ce_matches_exhaustive_minimum(seed: u64, s in 1usize..=4, t in 1usize..6, l in 2usize..6) {
        let (logits, labels) = ce_streams(seed, s, t, l);
        let got = pit::pit_ce(&logits, &labels).unwrap();
        let (loss, perm) = oracle_min_assignment(&oracle_ce_costs(&logits, &labels));
        prop_assert_eq!(got.best.loss, loss);
        prop_assert_eq!(got.best.perm, perm);
    }

    #[test]
    fn relabeling_targets_composes_the_assignment(
        seed: u64, s in 2usize..=4, t in 1usize..6, d in 1usize..4, k in 0usize..24,
    ) {
        let all = heap_permutations(s);
        let pi = &all[k % all.len()];
        let inv = inverse(pi);
        let (outs, tgts) = streams(seed, s, t, d);
        let a = pit::pit_mse(&outs, &tgts).unwrap();
        let b = pit::pit_mse(&outs, &permute(&tgts, pi)).unwrap();
        prop_assert!((a.best.loss - b.best.loss).abs() <= 1e-12);
        let composed: Vec<usize> = a.best.perm.iter().map(|&r| inv[r]).collect();
        prop_assert_eq!(b.best.perm, composed);

        let (logits, labels) = ce_streams(seed ^ 1, s, t, d + 1);
        let a = pit::pit_ce(&logits, &labels).unwrap();
        let b = pit::pit_ce(&logits, &permute(&labels, pi)).unwrap();
        prop_assert!((a.best.loss - b.best.loss).abs() <= 1e-12);
        // Equal label streams tie; the composed assignment is then not unique.
        if unique_minimum(&a) {
            let composed: Vec<usize> = a.best.perm.iter().map(|&r| inv[r]).collect();
            prop_assert_eq!(b.best.perm, composed);
        }
    }

    #[test]
    fn pit_never_exceeds_fixed(seed: u64, s in 1usize..=4, t in 1usize..6, d in 1usize..4) {
        let (outs, tgts) = streams(seed, s, t, d);
        let p = pit::pit_mse(&outs, &tgts).unwrap();
        let f = pit::fixed_mse(&outs, &tgts).unwrap();
        prop_assert!(p.best.loss <= f);
        let identity: Vec<usize> = (0..s).collect();
        prop_assert_eq!(p.best.loss == f, p.best.perm == identity);

        let (logits, labels) = ce_streams(seed, s, t, d + 1);
        let p = pit::pit_ce(&logits, &labels).unwrap();
        prop_assert!(p.best.loss <= pit::fixed_ce(&logits, &labels).unwrap());
    }

    #[test]
    fn duplicated_target_ties_to_identity(seed: u64, s in 1usize..=4, t in 1usize..6, d in 1usize..4) {
        let (outs, tgts) = streams(seed, s, t, d);
        let dup = vec![tgts[0].clone(); s];
        let r = pit::pit_mse(&outs, &dup).unwrap();
        let first = r.all_losses[0].1;
        prop_assert!(r.all_losses.iter().all(|(_, l)| *l == first));
        prop_assert_eq!(r.best.perm, (0..s).collect::<Vec<_>>());
    }

    #[test]
    fn pit_gradient_is_fixed_gradient_at_chosen_perm(
        seed: u64, s in 2usize..=4, t in 1usize..5, d in 1usize..4,
    ) {
        let (outs, tgts) = streams(seed, s, t, d);
        let mut params = ParamSet::new();
        let ids: Vec<_> = outs.iter().enumerate().map(|(k, o)| params.add(format!("o{k}"), o.clone())).collect();
        let perm = pit::pit_mse(&outs, &tgts).unwrap().best.perm;
        let run = |targets: &[Tensor], use_pit: bool| {
            let mut g = Graph::new(&params);
            let o: Vec<_> = ids.iter().map(|&id| g.param(id)).collect();
            let y: Vec<_> = targets.iter().map(|x| g.input(x.clone()).unwrap()).collect();
            let (loss, _) = if use_pit {
                pit::pit_mse_loss(&mut g, &o, &y).unwrap()
            } else {
                pit::fixed_mse_loss(&mut g, &o, &y).unwrap()
            };
            (g.value(loss).item(), g.backward(loss).unwrap())
        };
        let (lp, gp) = run(&tgts, true);
        let (lf, gf) = run(&permute(&tgts, &perm), false);
        prop_assert_eq!(lp, lf);
        prop_assert_eq!(gp, gf);

        let (logits, labels) = ce_streams(seed, s, t, d + 1);
        let mut params = ParamSet::new();
        let ids: Vec<_> = logits.iter().enumerate().map(|(k, o)| params.add(format!("z{k}"), o.clone())).collect();
        let labs: Vec<Rc<[usize]>> = labels.iter().map(|l| Rc::from(l.as_slice())).collect();
        let perm = pit::pit_ce(&logits, &labels).unwrap().best.perm;
        let grads = |forced: Option<&[usize]>, labs: &[Rc<[usize]>]| {
            let mut g = Graph::new(&params);
            let z: Vec<_> = ids.iter().map(|&id| g.param(id)).collect();
            let (loss, _) = pit::pit_ce_loss(&mut g, &z, labs, None, forced).unwrap();
            g.backward(loss).unwrap()
        };
        let identity: Vec<usize> = (0..s).collect();
        prop_assert_eq!(grads(None, &labs), grads(Some(&identity), &permute(&labs, &perm)));
    }
}

#[test]
fn stream_count_limits() {
    assert_eq!(pit::permutations(6).unwrap().len(), 720);
    assert!(pit::permutations(7).is_err());
    assert!(pit::permutations(0).is_err());
    let (outs, tgts) = streams(1, 2, 3, 2);
    assert!(pit::pit_mse(&outs, &tgts[..1]).is_err());
}
