//! Three-phase training of the joint separation and recognition system.
//!
//! Usage: `cargo run --release --example joint_training -- [mixtures] [seed]`

use pitmix::corpus::dataset::{generate_split, split_speakers};
use pitmix::corpus::{CorpusConfig, SplitKind};
use pitmix::dsp::FbankConfig;
use pitmix::eval::score_dataset;
use pitmix::models::{Arch, ArchConfig, Model};
use pitmix::train::{train_arch4, TrainConfig};

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let mixtures: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let corpus = CorpusConfig { num_mixtures: mixtures, ..CorpusConfig::default() };
    let fbank = FbankConfig { n_mels: 16, ..FbankConfig::default() };
    let pools = split_speakers(corpus.num_speakers, 2)?;
    let sizes = corpus.split_sizes();
    let split = |k: usize, kind| generate_split(&corpus, &fbank, kind, &pools[k], sizes[k], seed);
    let (tr, va, te) = (split(0, SplitKind::Train)?, split(1, SplitKind::Valid)?, split(2, SplitKind::Test)?);

    let mut model = Model::build(ArchConfig::desk(Arch::A4Joint), seed)?;
    let log = train_arch4(&mut model, &tr, &va, &TrainConfig { seed, ..TrainConfig::desk() })?;
    for r in &log.records {
        println!("{:<10} epoch {:>3}  train {:>8.3}  valid {:>8.3}", r.phase.name(), r.epoch, r.train_loss, r.valid_loss);
    }
    let fe = score_dataset(&model, &te)?.overall().frame_err();
    println!("test frame error {fe:.3}");
    Ok(())
}
