//! Writes a small two-talker corpus and summarizes each split.
//!
//! Usage: `cargo run --example generate_corpus -- [out_dir] [seed]`

use std::path::PathBuf;

use pitmix::cli::dataset_summary;
use pitmix::corpus::dataset::{fingerprint, load_split};
use pitmix::corpus::{generate_dataset, CorpusConfig, SplitKind};
use pitmix::dsp::FbankConfig;

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("pitmix_corpus"));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let corpus = CorpusConfig { num_mixtures: 100, ..CorpusConfig::default() };
    let fbank = FbankConfig { n_mels: 16, ..FbankConfig::default() };
    generate_dataset(&corpus, &fbank, seed, &out)?;
    let splits = SplitKind::ALL
        .into_iter()
        .map(|k| load_split(&out, k, fbank.frame_hop).map(|(_, s)| (k, s)))
        .collect::<pitmix::Result<Vec<_>>>()?;
    let view: Vec<_> = splits.iter().map(|(k, s)| (*k, s.as_slice())).collect();
    print!("{}", dataset_summary(&view));
    println!("wrote {} (fingerprint {})", out.display(), &fingerprint(&corpus, &fbank, seed)[..16]);
    Ok(())
}
