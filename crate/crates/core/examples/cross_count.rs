//! Scores a three-stream recognizer on two-talker mixtures.
//!
//! Usage: `cargo run --release --example cross_count -- [mixtures] [epochs] [seed]`

use pitmix::corpus::dataset::{generate_split, split_speakers};
use pitmix::corpus::{CorpusConfig, SplitKind};
use pitmix::dsp::FbankConfig;
use pitmix::eval::cross_count_eval;
use pitmix::models::{Arch, ArchConfig, Model};
use pitmix::train::{train, TrainConfig};

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let mixtures: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let fbank = FbankConfig { n_mels: 16, ..FbankConfig::default() };

    let corpus = |s: usize| CorpusConfig { num_mixtures: mixtures, num_sources: s, snr_grid: vec![0.0], ..CorpusConfig::default() };
    let three = corpus(3);
    let pools = split_speakers(three.num_speakers, 3)?;
    let sizes = three.split_sizes();
    let tr = generate_split(&three, &fbank, SplitKind::Train, &pools[0], sizes[0], seed)?;
    let va = generate_split(&three, &fbank, SplitKind::Valid, &pools[1], sizes[1], seed)?;

    let two = corpus(2);
    let pools2 = split_speakers(two.num_speakers, 2)?;
    let te = generate_split(&two, &fbank, SplitKind::Test, &pools2[2], two.split_sizes()[2], seed)?;

    let mut model = Model::build(ArchConfig { num_streams: 3, ..ArchConfig::desk(Arch::A3DirectPitCe) }, seed)?;
    train(&mut model, &tr, &va, &TrainConfig { max_epochs: epochs, seed, ..TrainConfig::desk() }, None, None)?;
    let report = cross_count_eval(&model, &te)?;
    print!("{}", report.to_csv());
    if let Some(s) = &report.surplus {
        println!("{} surplus streams over the test set, mean decoded length {:.2}", s.streams, s.mean_decoded_len);
    }
    Ok(())
}
