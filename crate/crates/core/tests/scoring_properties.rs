mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use pitmix::eval::{best_assignment_score, best_injection_score, levenshtein, score_predictions, StreamRole};

fn units() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 0..7)
}

fn streams(seed: u64, s: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut r = rng(seed);
    let hyps = (0..s).map(|_| rand_units(&mut r, 8, 4)).collect();
    let refs = (0..s).map(|_| rand_units(&mut r, 8, 4)).collect();
    (hyps, refs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn levenshtein_matches_edit_script_enumeration(a in units(), b in units()) {
        let got = levenshtein(&a, &b);
        let (best, triples) = oracle_edit_scripts(&a, &b);
        prop_assert_eq!(got.distance, best);
        prop_assert!(triples.contains(&(got.subs, got.dels, got.ins)));
        prop_assert_eq!(got.subs + got.dels + got.ins, got.distance);
    }

    #[test]
    fn triangle_inequality(a in units(), b in units(), c in units()) {
        let ac = levenshtein(&a, &c).distance;
        prop_assert!(ac <= levenshtein(&a, &b).distance + levenshtein(&b, &c).distance);
        prop_assert_eq!(levenshtein(&a, &a).distance, 0);
    }

    #[test]
    fn assignment_matches_brute_force(seed: u64, s in 1usize..=3) {
        let (hyps, refs) = streams(seed, s);
        let got = best_assignment_score(&hyps, &refs).unwrap();
        let expect = heap_permutations(s)
            .iter()
            .map(|p| p.iter().enumerate().map(|(h, &r)| oracle_distance(&hyps[h], &refs[r])).sum::<usize>())
            .min()
            .unwrap();
        prop_assert_eq!(got.total, expect);
        let realized: usize = got.perm.iter().enumerate().map(|(h, &r)| oracle_distance(&hyps[h], &refs[r])).sum();
        prop_assert_eq!(realized, got.total);
    }

    #[test]
    fn assignment_is_invariant_to_reordering(seed: u64, s in 2usize..=3, k in 0usize..6) {
        let (hyps, refs) = streams(seed, s);
        let all = heap_permutations(s);
        let pi = &all[k % all.len()];
        let base = best_assignment_score(&hyps, &refs).unwrap();
        let refs2: Vec<_> = pi.iter().map(|&j| refs[j].clone()).collect();
        let hyps2: Vec<_> = pi.iter().map(|&j| hyps[j].clone()).collect();
        let r = best_assignment_score(&hyps, &refs2).unwrap();
        let h = best_assignment_score(&hyps2, &refs).unwrap();
        prop_assert_eq!(r.total, base.total);
        prop_assert_eq!(h.total, base.total);
        // The reordered problem's assignment, mapped back, is optimal for the original.
        let mapped: usize = h.perm.iter().enumerate().map(|(s2, &rr)| oracle_distance(&hyps[pi[s2]], &refs[rr])).sum();
        prop_assert_eq!(mapped, base.total);
    }

    #[test]
    fn injection_matches_brute_force(seed: u64, k in 1usize..=2, extra in 1usize..=2) {
        let mut r = rng(seed);
        let hyps: Vec<Vec<usize>> = (0..k + extra).map(|_| rand_units(&mut r, 8, 4)).collect();
        let refs: Vec<Vec<usize>> = (0..k).map(|_| rand_units(&mut r, 8, 4)).collect();
        let got = best_injection_score(&hyps, &refs).unwrap();
        prop_assert_eq!(got.total, oracle_best_injection(&hyps, &refs));
        prop_assert_eq!(got.surplus.len(), extra);
        for h in &got.surplus {
            prop_assert!(!got.injection.contains(h));
        }
    }
}

fn sample_with_labels(labels: Vec<Vec<usize>>, snr: f64) -> pitmix::corpus::MixtureSample {
    use pitmix::dsp::FeatureSequence;
    let t = labels[0].len();
    let feat = FeatureSequence::new(vec![0.0; t], t, 1, 0.01).unwrap();
    pitmix::corpus::MixtureSample {
        mixed_features: feat.clone(),
        source_features: vec![feat; labels.len()],
        speaker_ids: (0..labels.len() as u32).collect(),
        gains: vec![1.0; labels.len()],
        source_labels: labels,
        snr_db: snr,
        num_labels: 6,
    }
}

#[test]
fn reference_pass_through_scores_zero() {
    let mut r = rng(4);
    let samples: Vec<_> = (0..10)
        .map(|i| {
            let t = r.gen_range(3..12);
            sample_with_labels((0..2).map(|_| rand_labels(&mut r, t, 6)).collect(), (i % 2) as f64 * 5.0)
        })
        .collect();
    let preds: Vec<_> = samples.iter().map(|s| s.source_labels.clone()).collect();
    let rep = score_predictions(&samples, &preds).unwrap();
    assert!(rep.rows.iter().all(|row| row.edits.distance == 0 && row.frame_errors == 0));
    assert_eq!(rep.overall().n_utts, 10);
    assert_eq!(rep.row(Some(5.0), StreamRole::High).unwrap().n_utts, 5);
    assert_eq!(score_predictions(&samples, &preds).unwrap(), rep);
    let swapped: Vec<_> = preds.iter().map(|p| vec![p[1].clone(), p[0].clone()]).collect();
    assert_eq!(score_predictions(&samples, &swapped).unwrap(), rep);
}

#[test]
fn report_csv_schema() {
    let s = sample_with_labels(vec![vec![0, 1, 1, 2], vec![3, 3, 0, 0]], 0.0);
    let rep = score_predictions(std::slice::from_ref(&s), &[vec![vec![0, 1, 2, 2], vec![3, 3, 3, 0], vec![4, 4, 4, 4]]]).unwrap();
    let csv = rep.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), pitmix::eval::REPORT_HEADER);
    assert!(lines.all(|l| l.split(',').count() == 8));
    let surplus = rep.surplus.unwrap();
    assert_eq!(surplus.streams, 1);
    assert_eq!(surplus.mean_decoded_len, 1.0);
}

#[test]
fn untrained_model_is_near_total_error_and_rows_count_samples() {
    use pitmix::corpus::dataset::{generate_split, split_speakers, CorpusConfig, SplitKind};
    use pitmix::dsp::FbankConfig;
    use pitmix::eval::score_dataset;
    use pitmix::models::{Arch, ArchConfig, Model};

    let corpus = CorpusConfig { utts_per_speaker: 4, ..CorpusConfig::default() };
    let fbank = FbankConfig { n_mels: 16, ..FbankConfig::default() };
    let pools = split_speakers(corpus.num_speakers, 2).unwrap();
    let samples = generate_split(&corpus, &fbank, SplitKind::Train, &pools[0], 20, 3).unwrap();
    let cfg = ArchConfig::desk(Arch::A3DirectPitCe);
    assert_eq!(cfg.num_labels, 21);
    let rep = score_dataset(&Model::build(cfg, 1).unwrap(), &samples).unwrap();
    assert!(rep.overall().unit_err() > 0.8, "{}", rep.overall().unit_err());
    assert_eq!(rep.overall().n_utts, samples.len());
    for snr in corpus.snr_grid {
        let n = samples.iter().filter(|s| s.snr_db == snr).count();
        assert_eq!(n, 4);
        for role in [StreamRole::High, StreamRole::Low, StreamRole::All] {
            assert_eq!(rep.row(Some(snr), role).unwrap().n_utts, n, "{snr} {role:?}");
        }
    }
}
