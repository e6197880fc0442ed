mod common;

use std::rc::Rc;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use pitmix::nn::graph::softmax_row;
use pitmix::nn::{bidi_layer, sgd_step, BidiParams, Checkpoint, ClipMode, Graph, Initializer, ParamGrads, ParamSet, Tensor};
use pitmix::Error;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(row in prop::collection::vec(-50.0f64..50.0, 1..30)) {
        let (p, _) = softmax_row(&row);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn ce_ignores_per_frame_shifts(seed: u64, t in 1usize..8, l in 2usize..8) {
        let mut r = rng(seed);
        let logits = rand_tensor(&mut r, t, l);
        let labels: Rc<[usize]> = rand_labels(&mut r, t, l).into();
        let mut shifted = logits.clone();
        for i in 0..t {
            let c = r.gen_range(-100.0..100.0);
            for v in &mut shifted.data[i * l..(i + 1) * l] {
                *v += c;
            }
        }
        let params = ParamSet::new();
        let mut g = Graph::new(&params);
        let a = g.input(logits).unwrap();
        let b = g.input(shifted).unwrap();
        let ca = g.softmax_ce_sum(a, labels.clone(), None).unwrap();
        let cb = g.softmax_ce_sum(b, labels, None).unwrap();
        prop_assert!((g.value(ca).item() - g.value(cb).item()).abs() <= 1e-9);
    }

    #[test]
    fn forward_and_backward_are_reproducible(seed: u64, t in 1usize..6, d in 1usize..4, h in 1usize..4) {
        let mut params = ParamSet::new();
        let p = BidiParams::init(&mut params, &mut Initializer::new(seed), "l", d, h);
        let x = rand_tensor(&mut rng(seed), t, d);
        let run = || {
            let mut g = Graph::new(&params);
            let xv = g.input(x.clone()).unwrap();
            let y = bidi_layer(&mut g, xv, &p).unwrap();
            let z = g.input(Tensor::zeros(&[t, 2 * h])).unwrap();
            let loss = g.sq_dist(y, z).unwrap();
            (g.value(y).clone(), g.backward(loss).unwrap())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn elementwise_clip_bounds_each_step(seed: u64, n in 1usize..20, lr in 0.0f64..2.0, clip in 1e-4f64..1.0) {
        let mut r = rng(seed);
        let mut params = ParamSet::new();
        let id = params.add("w", rand_tensor(&mut r, 1, n));
        let before = params.clone();
        let mut grads = ParamGrads::zeros_like(&params);
        grads.grads[0].iter_mut().for_each(|g| *g = r.gen_range(-5.0..5.0));
        sgd_step(&mut params, &grads, lr, clip, ClipMode::Elementwise, |_| true).unwrap();
        for k in 0..n {
            let g = grads.grads[0][k];
            let expect = before.get(id).data[k] - lr * g.clamp(-clip, clip);
            prop_assert_eq!(params.get(id).data[k], expect);
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed: u64, shapes in prop::collection::vec((1usize..5, 1usize..5), 1..5)) {
        let mut r = rng(seed);
        let mut params = ParamSet::new();
        for (k, (a, b)) in shapes.iter().enumerate() {
            params.add(format!("p{k}"), rand_tensor(&mut r, *a, *b));
        }
        let ck = Checkpoint { arch_tag: 3, layer_count: 2, params };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), ck.to_bytes());
        prop_assert_eq!(back, ck);
    }
}

#[test]
fn clip_examples() {
    let mut params = ParamSet::new();
    let id = params.add("w", Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
    let mut grads = ParamGrads::zeros_like(&params);
    grads.grads[0] = vec![1.0, -1e-5];
    sgd_step(&mut params, &grads, 1.0, 0.0003, ClipMode::Elementwise, |_| true).unwrap();
    assert_eq!(params.get(id).data[0], 0.5 - 0.0003);
    let mut params2 = ParamSet::new();
    let id2 = params2.add("w", Tensor::matrix(1, 1, vec![0.0]).unwrap());
    let mut g2 = ParamGrads::zeros_like(&params2);
    g2.grads[0] = vec![-1e-5];
    sgd_step(&mut params2, &g2, 0.1, 0.0003, ClipMode::Elementwise, |_| true).unwrap();
    assert!((params2.get(id2).data[0] - 1e-6).abs() < 1e-18);
}

#[test]
fn overflow_is_reported_not_propagated() {
    let params = ParamSet::new();
    let mut g = Graph::new(&params);
    let a = g.input(Tensor::matrix(1, 1, vec![1e200]).unwrap()).unwrap();
    let err = g.matmul(a, a).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert!(g.input(Tensor::matrix(1, 1, vec![f64::NAN]).unwrap()).is_err());
}
