//! Fixed-order versus permutation-free training on equal-energy mixtures.
//!
//! With both talkers at 0 dB nothing distinguishes "source 0" from
//! "source 1", so a separator trained against a fixed reference order
//! regresses towards their average. Assignment-free training avoids it.
//!
//! Usage: `cargo run --release --example label_permutation -- [seed] [mixtures]`

use pitmix::corpus::dataset::{generate_split, split_speakers};
use pitmix::corpus::{CorpusConfig, SplitKind};
use pitmix::dsp::FbankConfig;
use pitmix::eval::score_dataset;
use pitmix::models::{Arch, ArchConfig, Model, Objective};
use pitmix::train::{evaluate, train, TrainConfig};

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mixtures: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);

    let corpus = CorpusConfig { num_mixtures: mixtures, snr_grid: vec![0.0], ..CorpusConfig::default() };
    let fbank = FbankConfig { n_mels: 16, ..FbankConfig::default() };
    let pools = split_speakers(corpus.num_speakers, 2)?;
    let sizes = corpus.split_sizes();
    let split = |k: usize, kind| generate_split(&corpus, &fbank, kind, &pools[k], sizes[k], seed);
    let (tr, va, te) = (split(0, SplitKind::Train)?, split(1, SplitKind::Valid)?, split(2, SplitKind::Test)?);
    let cfg = TrainConfig { seed, ..TrainConfig::desk() };

    println!("arch                 separation valid mse   test frame error");
    for (arch, sep) in [
        (Arch::A1FixedSep, Some(Objective::FixedMse)),
        (Arch::A2PitSep, Some(Objective::PitMse)),
        (Arch::A3DirectPitCe, None),
    ] {
        let mut model = Model::build(ArchConfig::desk(arch), seed)?;
        train(&mut model, &tr, &va, &cfg, None, None)?;
        let mse = match sep {
            Some(obj) => format!("{:.4}", evaluate(&model, &va, obj)?.mean_loss),
            None => "-".into(),
        };
        let fe = score_dataset(&model, &te)?.overall().frame_err();
        println!("{:<20} {mse:>22} {fe:>18.3}", arch.name());
    }
    Ok(())
}
