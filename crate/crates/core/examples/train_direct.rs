//! Trains the direct permutation-free recognizer on a small corpus and scores it.
//!
//! Usage: `cargo run --release --example train_direct -- [mixtures] [epochs] [seed]`

use pitmix::corpus::dataset::{generate_split, split_speakers};
use pitmix::corpus::{CorpusConfig, SplitKind};
use pitmix::dsp::FbankConfig;
use pitmix::eval::score_dataset;
use pitmix::models::{Arch, ArchConfig, Model};
use pitmix::train::{train, TrainConfig};

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let mixtures: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(15);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let corpus = CorpusConfig { num_mixtures: mixtures, ..CorpusConfig::default() };
    let fbank = FbankConfig { n_mels: 16, ..FbankConfig::default() };
    let pools = split_speakers(corpus.num_speakers, corpus.num_sources)?;
    let sizes = corpus.split_sizes();
    let split = |k: usize, kind| generate_split(&corpus, &fbank, kind, &pools[k], sizes[k], seed);
    let (tr, va, te) = (split(0, SplitKind::Train)?, split(1, SplitKind::Valid)?, split(2, SplitKind::Test)?);

    let mut model = Model::build(ArchConfig::desk(Arch::A3DirectPitCe), seed)?;
    let before = score_dataset(&model, &te)?.overall().frame_err();
    println!("{} parameters, untrained test frame error {before:.3}", model.param_count());
    let cfg = TrainConfig { max_epochs: epochs, seed, ..TrainConfig::desk() };
    let out = train(&mut model, &tr, &va, &cfg, None, None)?;
    for r in &out.log.records {
        println!(
            "epoch {:>3}  train {:>8.3}  valid {:>8.3}  assignment switches {:.2}",
            r.epoch, r.train_loss, r.valid_loss, r.perm_switch_rate
        );
    }
    let report = score_dataset(&model, &te)?;
    print!("{}", report.to_csv());
    Ok(())
}
