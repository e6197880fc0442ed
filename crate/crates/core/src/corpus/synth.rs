//! Synthetic speakers and utterances.
//!
//! Every non-silence label is rendered as a harmonic complex whose partials
//! are shaped by two formant-like resonances. The label fixes the nominal
//! resonance pair; the speaker warps it, perturbs it per label, and supplies
//! the fundamental, so the same script sounds different per speaker while
//! staying recognizable across speakers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Gender, LabelId, Utterance, SILENCE};
use crate::dsp::{FbankConfig, Waveform};
use crate::error::{Error, Result};

/// Amplitude of the near-silence rendered for the silence label.
pub const SILENCE_AMPLITUDE: f64 = 1e-4;
/// RMS level of rendered speech units before per-unit variation.
pub const UNIT_RMS: f64 = 0.1;
const FADE_SECONDS: f64 = 0.002;
const MAX_PARTIAL_HZ: f64 = 7000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSignature {
    pub f0: f64,
    pub formants: [f64; 2],
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: u32,
    pub gender: Gender,
    /// Indexed by label id; the silence entry is unused.
    pub unit_signatures: Vec<UnitSignature>,
}

/// Nominal resonance pair of every label (silence gets `[0, 0]`).
///
/// Units sit on a grid: the first resonance cycles fastest over a low band,
/// the second steps through a higher band.
pub fn nominal_formants(num_labels: usize) -> Vec<[f64; 2]> {
    let units = num_labels.saturating_sub(1);
    let n2 = units.clamp(1, 4);
    let n1 = units.div_ceil(n2).max(1);
    let spread = |lo: f64, hi: f64, n: usize, i: usize| {
        if n == 1 {
            (lo * hi).sqrt()
        } else {
            lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
        }
    };
    let mut out = vec![[0.0, 0.0]];
    for u in 0..units {
        out.push([
            spread(250.0, 1000.0, n1, u % n1),
            spread(1300.0, 3600.0, n2, u / n1),
        ]);
    }
    out
}

impl SpeakerProfile {
    /// Deterministic speaker drawn from `(seed, speaker_id)`.
    pub fn generate(speaker_id: u32, num_labels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5eed, speaker_id as u64]));
        let gender = if (speaker_id / 2).is_multiple_of(2) {
            Gender::A
        } else {
            Gender::B
        };
        let base_f0 = match gender {
            Gender::A => rng.gen_range(95.0..150.0),
            Gender::B => rng.gen_range(170.0..250.0),
        };
        let warp: f64 = rng.gen_range(0.9..1.1);
        let unit_signatures = nominal_formants(num_labels)
            .into_iter()
            .map(|[f1, f2]| {
                let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(0.97..1.03);
                let f0 = base_f0 * rng.gen_range(0.92..1.08);
                UnitSignature {
                    f0,
                    formants: [f1 * warp * jitter(&mut rng), f2 * warp * jitter(&mut rng)],
                    bandwidth: 60.0 + 0.5 * f0,
                }
            })
            .collect();
        SpeakerProfile {
            speaker_id,
            gender,
            unit_signatures,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.unit_signatures.len()
    }
}

/// Label run: `frames` consecutive frames of `label`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptItem {
    pub label: LabelId,
    pub frames: usize,
}

/// Random script: short silence, `units` distinct-neighbour units, short silence.
pub fn random_script(
    rng: &mut impl Rng,
    num_labels: usize,
    units: (usize, usize),
    unit_frames: (usize, usize),
) -> Vec<ScriptItem> {
    let mut script = vec![ScriptItem {
        label: SILENCE,
        frames: rng.gen_range(1..=3),
    }];
    let n = rng.gen_range(units.0..=units.1);
    let mut prev = SILENCE;
    for _ in 0..n {
        let mut label = rng.gen_range(1..num_labels);
        while label == prev && num_labels > 2 {
            label = rng.gen_range(1..num_labels);
        }
        prev = label;
        script.push(ScriptItem {
            label,
            frames: rng.gen_range(unit_frames.0..=unit_frames.1),
        });
    }
    script.push(ScriptItem {
        label: SILENCE,
        frames: rng.gen_range(1..=3),
    });
    script
}

fn render_unit(sig: &UnitSignature, len: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let partials = (MAX_PARTIAL_HZ.min(sr / 2.0 - 100.0) / sig.f0).floor() as usize;
    let mut out = vec![0.0; len];
    for h in 1..=partials {
        let f = h as f64 * sig.f0;
        let amp: f64 = sig
            .formants
            .iter()
            .map(|&fc| (-0.5 * ((f - fc) / sig.bandwidth).powi(2)).exp())
            .sum();
        let phase = rng.gen_range(0.0..2.0 * PI);
        if amp < 1e-4 {
            continue;
        }
        let w = 2.0 * PI * f / sr;
        for (n, o) in out.iter_mut().enumerate() {
            *o += amp * (w * n as f64 + phase).sin();
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let level = UNIT_RMS * rng.gen_range(0.7..1.3) / rms.max(1e-12);
    let fade = ((FADE_SECONDS * sr) as usize).min(len / 2);
    for i in 0..fade {
        let g = 0.5 - 0.5 * (PI * i as f64 / fade as f64).cos();
        out[i] *= g;
        out[len - 1 - i] *= g;
    }
    out.iter_mut().for_each(|v| *v *= level);
    out
}

/// Renders `script` with the speaker's signatures.
///
/// The waveform length is the smallest that yields exactly one feature frame
/// per label under `fbank`; frame `t`'s hop-sized segment carries label `t`
/// and the last label also covers the window tail.
pub fn synth_utterance(
    profile: &SpeakerProfile,
    script: &[ScriptItem],
    fbank: &FbankConfig,
    rng_seed: u64,
) -> Result<Utterance> {
    if script.is_empty() {
        return Err(Error::invalid("empty label script"));
    }
    let num_labels = profile.num_labels();
    for item in script {
        if item.frames == 0 {
            return Err(Error::invalid("script items need at least one frame"));
        }
        if item.label >= num_labels {
            return Err(Error::invalid(format!(
                "label {} outside the {num_labels}-label set",
                item.label
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let frames: usize = script.iter().map(|s| s.frames).sum();
    let total = fbank.samples_for_frames(frames);
    let hop = fbank.hop_samples();
    let sr = fbank.sample_rate as f64;
    let mut samples = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(frames);
    let mut frame_start = 0;
    for (k, item) in script.iter().enumerate() {
        let end = if k + 1 == script.len() {
            total
        } else {
            (frame_start + item.frames) * hop
        };
        let len = end - samples.len();
        if item.label == SILENCE {
            samples.extend((0..len).map(|_| rng.gen_range(-SILENCE_AMPLITUDE..SILENCE_AMPLITUDE)));
        } else {
            samples.extend(render_unit(
                &profile.unit_signatures[item.label],
                len,
                sr,
                &mut rng,
            ));
        }
        labels.extend(std::iter::repeat_n(item.label, item.frames));
        frame_start += item.frames;
    }
    debug_assert_eq!(fbank.num_frames(samples.len()), labels.len());
    Ok(Utterance {
        waveform: Waveform::new(samples, fbank.sample_rate)?,
        labels,
        speaker_id: profile.speaker_id,
        num_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::logfbank;

    fn fb() -> FbankConfig {
        FbankConfig {
            n_mels: 16,
            ..FbankConfig::default()
        }
    }

    #[test]
    fn nominal_grid_is_distinct() {
        let f = nominal_formants(21);
        assert_eq!(f.len(), 21);
        for i in 1..21 {
            for j in i + 1..21 {
                assert_ne!(f[i], f[j]);
            }
        }
    }

    #[test]
    fn speakers_are_distinct_and_complete() {
        let a = SpeakerProfile::generate(0, 21, 1);
        let b = SpeakerProfile::generate(1, 21, 1);
        assert_eq!(a.unit_signatures.len(), 21);
        assert_ne!(a.unit_signatures, b.unit_signatures);
        assert_eq!(a, SpeakerProfile::generate(0, 21, 1));
    }

    #[test]
    fn silence_script() {
        let p = SpeakerProfile::generate(3, 21, 1);
        let u = synth_utterance(&p, &[ScriptItem { label: 0, frames: 10 }], &fb(), 5).unwrap();
        assert_eq!(u.labels, vec![0; 10]);
        assert_eq!(fb().num_frames(u.waveform.len()), 10);
        assert!(u.waveform.energy() < 1e-6);
    }

    #[test]
    fn deterministic_and_validated() {
        let p = SpeakerProfile::generate(3, 21, 1);
        let script = [
            ScriptItem { label: 0, frames: 2 },
            ScriptItem { label: 4, frames: 6 },
            ScriptItem { label: 9, frames: 5 },
        ];
        let a = synth_utterance(&p, &script, &fb(), 5).unwrap();
        let b = synth_utterance(&p, &script, &fb(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels.len(), 13);
        assert!(synth_utterance(&p, &[], &fb(), 5).is_err());
        assert!(synth_utterance(&p, &[ScriptItem { label: 21, frames: 1 }], &fb(), 5).is_err());
        assert!(synth_utterance(&p, &[ScriptItem { label: 1, frames: 0 }], &fb(), 5).is_err());
    }

    #[test]
    fn different_speakers_differ_in_band_energy() {
        let script = [
            ScriptItem { label: 2, frames: 8 },
            ScriptItem { label: 11, frames: 8 },
        ];
        let mean_bands = |id| {
            let p = SpeakerProfile::generate(id, 21, 7);
            let u = synth_utterance(&p, &script, &fb(), 1).unwrap();
            logfbank(&u.waveform, &fb()).unwrap().moments().0
        };
        let (a, b) = (mean_bands(0), mean_bands(2));
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff > 0.1, "max band difference {diff}");
    }
}
