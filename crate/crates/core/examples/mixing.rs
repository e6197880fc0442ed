//! Mixes two utterances at each grid SNR and measures the result.
//!
//! Usage: `cargo run --example mixing -- [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pitmix::corpus::synth::{random_script, synth_utterance, SpeakerProfile};
use pitmix::corpus::{make_mixture, overlap_fraction, DEFAULT_NUM_LABELS};
use pitmix::dsp::{mix_with_snrs, snr_db, Fbank, FbankConfig, Waveform, DEFAULT_PAD_NOISE};

fn main() -> pitmix::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = FbankConfig::default();
    let fbank = Fbank::new(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utts = (0..2u32)
        .map(|spk| {
            let profile = SpeakerProfile::generate(spk, DEFAULT_NUM_LABELS, seed);
            let script = random_script(&mut rng, DEFAULT_NUM_LABELS, (4, 6), (5, 9));
            synth_utterance(&profile, &script, &cfg, seed + u64::from(spk))
        })
        .collect::<pitmix::Result<Vec<_>>>()?;
    println!("source frames: {} and {}", utts[0].labels.len(), utts[1].labels.len());

    // Waveform level: equal-length prefixes, gain solved from energies.
    let n = utts[0].waveform.len().min(utts[1].waveform.len());
    let a = Waveform::new(utts[0].waveform.samples[..n].to_vec(), cfg.sample_rate)?;
    let b = Waveform::new(utts[1].waveform.samples[..n].to_vec(), cfg.sample_rate)?;
    for target in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let (_, g) = mix_with_snrs(&a, std::slice::from_ref(&b), &[target])?;
        let measured = snr_db(&a.samples, &b.scaled(g[0]).samples);
        // Sample level: padding, mixing, features and aligned labels.
        let mix = make_mixture(&utts, target, seed, &fbank, DEFAULT_PAD_NOISE)?;
        println!(
            "target {target:>4.1} dB: gain {:.4}, measured {measured:.9} dB; sample has {} frames, overlap {:.2}",
            g[0],
            mix.num_frames(),
            overlap_fraction(&mix.source_labels)
        );
    }
    Ok(())
}
