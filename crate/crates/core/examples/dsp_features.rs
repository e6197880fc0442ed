//! Renders one synthetic utterance and runs the feature front end on it.
//!
//! Usage: `cargo run --example dsp_features -- [speaker] [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pitmix::corpus::synth::{random_script, synth_utterance, SpeakerProfile};
use pitmix::corpus::DEFAULT_NUM_LABELS;
use pitmix::dsp::{cmvn, logfbank, FbankConfig};

fn main() -> pitmix::Result<()> {
    let mut args = std::env::args().skip(1);
    let speaker: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let fbank = FbankConfig::default();
    let profile = SpeakerProfile::generate(speaker, DEFAULT_NUM_LABELS, seed);
    let script = random_script(&mut ChaCha8Rng::seed_from_u64(seed), DEFAULT_NUM_LABELS, (4, 6), (5, 9));
    let utt = synth_utterance(&profile, &script, &fbank, seed)?;
    println!(
        "speaker {speaker}: {} samples at {} Hz, {} labelled frames",
        utt.waveform.len(),
        utt.waveform.sample_rate,
        utt.labels.len()
    );

    let raw = logfbank(&utt.waveform, &fbank)?;
    let norm = cmvn(&raw)?;
    let (mean, var) = raw.moments();
    println!("{} frames x {} mel bands, hop {} s", raw.num_frames, raw.dim, raw.frame_hop);
    println!("band  raw mean  raw var");
    for k in (0..raw.dim).step_by(raw.dim / 8) {
        println!("{k:>4}  {:>8.3}  {:>7.3}", mean[k], var[k]);
    }
    let (m, v) = norm.moments();
    let worst_mean = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let worst_var = v.iter().fold(0.0f64, |a, x| a.max((x - 1.0).abs()));
    println!("after cmvn: max |mean| {worst_mean:.1e}, max |var - 1| {worst_var:.1e}");
    println!("labels: {:?}", &utt.labels[..utt.labels.len().min(40)]);
    Ok(())
}
