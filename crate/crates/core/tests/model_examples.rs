mod common;

use proptest::prelude::*;

use common::*;
use pitmix::corpus::dataset::{generate_split, split_speakers, CorpusConfig, SplitKind};
use pitmix::corpus::{MixtureSample, SILENCE};
use pitmix::dsp::FbankConfig;
use pitmix::models::{collapse, feature_tensor, loss, Arch, ArchConfig, ForwardOutput, Model, Objective};
use pitmix::pit;

fn samples(n: usize, seed: u64) -> Vec<MixtureSample> {
    let corpus = CorpusConfig {
        utts_per_speaker: 4,
        units_per_utt: [2, 3],
        ..CorpusConfig::default()
    };
    let fbank = FbankConfig {
        n_mels: 16,
        ..FbankConfig::default()
    };
    let pools = split_speakers(corpus.num_speakers, 2).unwrap();
    generate_split(&corpus, &fbank, SplitKind::Train, &pools[0], n, seed).unwrap()
}

fn small(arch: Arch) -> ArchConfig {
    ArchConfig {
        hidden: 8,
        ..ArchConfig::desk(arch)
    }
}

fn separated(feats: Vec<pitmix::nn::Tensor>) -> ForwardOutput {
    ForwardOutput {
        separated_features: Some(feats),
        stream_logits: None,
    }
}

#[test]
fn distinct_mixtures_give_distinct_outputs() {
    let xs = samples(4, 1);
    for arch in Arch::ALL {
        let m = Model::build(small(arch), 2).unwrap();
        let outs: Vec<_> = xs.iter().map(|x| m.forward(&x.mixed_features).unwrap()).collect();
        for (i, a) in outs.iter().enumerate() {
            for b in &outs[i + 1..] {
                assert_ne!(a, b, "{arch}");
            }
        }
    }
}

#[test]
fn separation_loss_is_reproduced_from_saved_outputs() {
    let m = Model::build(small(Arch::A2PitSep), 3).unwrap();
    for x in samples(3, 2) {
        let out = m.forward(&x.mixed_features).unwrap();
        let targets: Vec<_> = x.source_features.iter().map(|f| feature_tensor(f).unwrap()).collect();
        let refed = pit::pit_mse(out.separated_features.as_ref().unwrap(), &targets).unwrap();
        let (value, _) = loss(&out, &x, &m.cfg).unwrap();
        let (taped, _) = m.objective_value(&x, Objective::PitMse).unwrap();
        assert_eq!(value, refed.best.loss);
        assert!((taped - value).abs() <= 1e-9 * value.abs().max(1.0), "{taped} vs {value}");
    }
}

#[test]
fn fixed_and_permutation_free_separation_losses() {
    let x = &samples(1, 3)[0];
    let targets: Vec<_> = x.source_features.iter().map(|f| feature_tensor(f).unwrap()).collect();
    let swapped = vec![targets[1].clone(), targets[0].clone()];
    let a1 = small(Arch::A1FixedSep);
    let a2 = small(Arch::A2PitSep);
    assert_eq!(loss(&separated(targets.clone()), x, &a1).unwrap().0, 0.0);
    assert_eq!(loss(&separated(swapped.clone()), x, &a2).unwrap().0, 0.0);
    assert!(loss(&separated(swapped), x, &a1).unwrap().0 > 0.0);
}

#[test]
fn direct_loss_is_the_exhaustive_minimum() {
    let m = Model::build(small(Arch::A3DirectPitCe), 4).unwrap();
    for x in samples(3, 4) {
        let out = m.forward(&x.mixed_features).unwrap();
        let logits = out.stream_logits.as_ref().unwrap();
        let (expect, _) = oracle_min_assignment(&oracle_ce_costs(logits, &x.source_labels));
        let (got, _) = loss(&out, &x, &m.cfg).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.abs(), "{got} vs {expect}");
    }
}

/// Run-length encoding, then drop silence runs.
fn rle_oracle(frames: &[usize]) -> Vec<usize> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &y in frames {
        match runs.last_mut() {
            Some((v, n)) if *v == y => *n += 1,
            _ => runs.push((y, 1)),
        }
    }
    runs.into_iter().map(|(v, _)| v).filter(|&v| v != SILENCE).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn collapse_matches_run_length_oracle(frames in prop::collection::vec(0usize..4, 0..40)) {
        prop_assert_eq!(collapse(&frames), rle_oracle(&frames));
    }
}
