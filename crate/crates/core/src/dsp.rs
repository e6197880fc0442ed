//! Waveform handling and the log mel filterbank front end.
//!
//! Everything here is a pure function of its inputs. Mixing follows the
//! linear single-microphone model: the mixture is the sample-wise sum of the
//! (scaled) sources, with interferer gains solved from the full-utterance
//! energy ratio.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_PAD_NOISE: f64 = 1e-4;
pub const CMVN_VAR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform has no samples"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude over the whole waveform.
    pub fn energy(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn mean_square(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// Energy-ratio SNR in dB between two sample buffers.
pub fn snr_db(reference: &[f64], other: &[f64]) -> f64 {
    10.0 * (mean_square(reference) / mean_square(other)).log10()
}

/// Time-domain feature matrix, `num_frames x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub data: Vec<f64>,
    pub num_frames: usize,
    pub dim: usize,
    pub frame_hop: f64,
    pub normalized: bool,
}

impl FeatureSequence {
    pub fn new(data: Vec<f64>, num_frames: usize, dim: usize, frame_hop: f64) -> Result<Self> {
        if num_frames == 0 || dim == 0 {
            return Err(Error::shape("feature sequence needs T >= 1 and D >= 1"));
        }
        if data.len() != num_frames * dim {
            return Err(Error::shape(format!(
                "feature data has {} entries, expected {}x{}",
                data.len(),
                num_frames,
                dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature sequence contains non-finite entries"));
        }
        Ok(FeatureSequence {
            data,
            num_frames,
            dim,
            frame_hop,
            normalized: false,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.dim + d]
    }

    /// Per-dimension mean and population variance.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_frames as f64;
        let mut mean = vec![0.0; self.dim];
        for t in 0..self.num_frames {
            for (m, v) in mean.iter_mut().zip(self.frame(t)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for t in 0..self.num_frames {
            for ((acc, v), m) in var.iter_mut().zip(self.frame(t)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        (mean, var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub target_snr_db: f64,
    pub num_sources: usize,
    pub pad_noise_amplitude: f64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_sources < 2 {
            return Err(Error::invalid("a mixture needs at least two sources"));
        }
        if !(self.pad_noise_amplitude >= 0.0) {
            return Err(Error::invalid("pad noise amplitude must be >= 0"));
        }
        if !self.target_snr_db.is_finite() {
            return Err(Error::invalid("target SNR must be finite"));
        }
        Ok(())
    }
}

/// Gain that puts `interferer` at `snr_db` below `target` in full-utterance energy.
pub fn snr_gain(target_energy: f64, interferer_energy: f64, snr_db: f64) -> f64 {
    (target_energy / (interferer_energy * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixes `target` with every interferer scaled to `spec.target_snr_db`.
///
/// Returns the mixture and the per-interferer gains. All inputs must already
/// share length and sample rate.
pub fn mix_at_snr(
    target: &Waveform,
    interferers: &[Waveform],
    spec: &MixSpec,
) -> Result<(Waveform, Vec<f64>)> {
    spec.validate()?;
    if interferers.len() + 1 != spec.num_sources {
        return Err(Error::invalid(format!(
            "mix spec expects {} sources, got {}",
            spec.num_sources,
            interferers.len() + 1
        )));
    }
    let snrs = vec![spec.target_snr_db; interferers.len()];
    mix_with_snrs(target, interferers, &snrs)
}

/// Same as [`mix_at_snr`] but with an individual SNR per interferer.
pub fn mix_with_snrs(
    target: &Waveform,
    interferers: &[Waveform],
    snrs_db: &[f64],
) -> Result<(Waveform, Vec<f64>)> {
    if interferers.len() != snrs_db.len() {
        return Err(Error::invalid("one SNR per interferer required"));
    }
    let e_target = target.energy();
    if e_target <= 0.0 {
        return Err(Error::invalid("target has zero energy; SNR undefined"));
    }
    let mut mixed = target.samples.clone();
    let mut gains = Vec::with_capacity(interferers.len());
    for (k, (w, &snr)) in interferers.iter().zip(snrs_db).enumerate() {
        if w.sample_rate != target.sample_rate {
            return Err(Error::invalid(format!("interferer {k} sample rate differs")));
        }
        if w.len() != target.len() {
            return Err(Error::invalid(format!(
                "interferer {k} has {} samples, target has {}; pad first",
                w.len(),
                target.len()
            )));
        }
        let e = w.energy();
        if e <= 0.0 {
            return Err(Error::invalid(format!("interferer {k} has zero energy")));
        }
        let g = snr_gain(e_target, e, snr);
        for (m, s) in mixed.iter_mut().zip(&w.samples) {
            *m += g * s;
        }
        gains.push(g);
    }
    Ok((Waveform::new(mixed, target.sample_rate)?, gains))
}

/// Front/back padding split for a deficit; the front takes the odd sample.
pub fn pad_split(deficit: usize) -> (usize, usize) {
    let back = deficit / 2;
    (deficit - back, back)
}

/// Pads with seeded uniform noise in `[-noise_amplitude, noise_amplitude]`,
/// keeping the original samples intact in the middle.
pub fn pad_to_length(
    w: &Waveform,
    length: usize,
    noise_amplitude: f64,
    rng_seed: u64,
) -> Result<Waveform> {
    if length < w.len() {
        return Err(Error::invalid(format!(
            "cannot pad {} samples down to {}",
            w.len(),
            length
        )));
    }
    if !(noise_amplitude >= 0.0) {
        return Err(Error::invalid("noise amplitude must be >= 0"));
    }
    let (front, back) = pad_split(length - w.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut noise = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if noise_amplitude == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-noise_amplitude..=noise_amplitude)
                }
            })
            .collect()
    };
    let mut samples = noise(front);
    samples.extend_from_slice(&w.samples);
    samples.extend(noise(back));
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbankConfig {
    pub sample_rate: u32,
    /// Analysis window length in seconds.
    pub frame_len: f64,
    /// Hop between frames in seconds.
    pub frame_hop: f64,
    /// 0 selects the next power of two at or above the window length.
    pub n_fft: usize,
    pub n_mels: usize,
    pub floor: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            frame_len: 0.025,
            frame_hop: 0.010,
            n_fft: 0,
            n_mels: 40,
            floor: 1e-10,
        }
    }
}

impl FbankConfig {
    pub fn frame_len_samples(&self) -> usize {
        (self.frame_len * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.frame_hop * self.sample_rate as f64).round() as usize
    }

    pub fn fft_size(&self) -> usize {
        if self.n_fft == 0 {
            self.frame_len_samples().next_power_of_two()
        } else {
            self.n_fft
        }
    }

    /// Frame count produced for a waveform of `len` samples (0 if too short).
    pub fn num_frames(&self, len: usize) -> usize {
        let win = self.frame_len_samples();
        if len < win {
            0
        } else {
            1 + (len - win) / self.hop_samples()
        }
    }

    /// Smallest sample count yielding exactly `frames` frames.
    pub fn samples_for_frames(&self, frames: usize) -> usize {
        assert!(frames >= 1);
        self.frame_len_samples() + (frames - 1) * self.hop_samples()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("fbank: {m}")));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.frame_len_samples() == 0 || self.hop_samples() == 0 {
            return bad("frame_len and frame_hop must cover at least one sample");
        }
        if self.fft_size() < self.frame_len_samples() {
            return bad("n_fft shorter than the window");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive");
        }
        if !(self.floor > 0.0) {
            return bad("floor must be positive");
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over `[0, sample_rate/2]`, returned as
/// `(left, center, right)` edge frequencies in Hz.
pub fn mel_filter_edges(n_mels: usize, sample_rate: u32) -> Vec<(f64, f64, f64)> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    points.windows(3).map(|w| (w[0], w[1], w[2])).collect()
}

/// Triangle weight of a filter at frequency `hz`.
pub fn triangle_weight((lo, center, hi): (f64, f64, f64), hz: f64) -> f64 {
    if hz <= lo || hz >= hi {
        0.0
    } else if hz <= center {
        (hz - lo) / (center - lo)
    } else {
        (hi - hz) / (hi - center)
    }
}

/// Precomputed analysis state; reuse it when extracting many utterances.
pub struct Fbank {
    cfg: FbankConfig,
    window: Vec<f64>,
    /// Per filter: first FFT bin and its weights.
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fbank").field("cfg", &self.cfg).finish()
    }
}

impl Fbank {
    pub fn new(cfg: &FbankConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.frame_len_samples();
        let n_fft = cfg.fft_size();
        // periodic Hann
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / n_fft as f64;
        let filters = mel_filter_edges(cfg.n_mels, cfg.sample_rate)
            .into_iter()
            .map(|edges| {
                let weights: Vec<f64> = (0..n_bins)
                    .map(|k| triangle_weight(edges, k as f64 * bin_hz))
                    .collect();
                let first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (first, weights[first..=last.max(first)].to_vec())
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Fbank {
            cfg: cfg.clone(),
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &FbankConfig {
        &self.cfg
    }

    /// Power spectrum `|STFT|^2` of every frame, `n_fft/2 + 1` bins each.
    pub fn power_spectrogram(&self, w: &Waveform) -> Result<Vec<Vec<f64>>> {
        if w.sample_rate != self.cfg.sample_rate {
            return Err(Error::invalid(format!(
                "waveform at {} Hz, front end configured for {} Hz",
                w.sample_rate, self.cfg.sample_rate
            )));
        }
        let frames = self.cfg.num_frames(w.len());
        if frames == 0 {
            return Err(Error::invalid(format!(
                "waveform of {} samples is shorter than one {}-sample frame",
                w.len(),
                self.cfg.frame_len_samples()
            )));
        }
        let n_fft = self.cfg.fft_size();
        let hop = self.cfg.hop_samples();
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let start = t * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let v = if i < self.window.len() {
                    w.samples[start + i] * self.window[i]
                } else {
                    0.0
                };
                *b = Complex::new(v, 0.0);
            }
            self.fft.process(&mut buf);
            out.push(buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect());
        }
        Ok(out)
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureSequence> {
        let spec = self.power_spectrogram(w)?;
        let frames = spec.len();
        let mut data = Vec::with_capacity(frames * self.cfg.n_mels);
        for power in &spec {
            for (first, weights) in &self.filters {
                let e: f64 = weights
                    .iter()
                    .zip(&power[*first..])
                    .map(|(wt, p)| wt * p)
                    .sum();
                data.push(e.max(self.cfg.floor).ln());
            }
        }
        FeatureSequence::new(data, frames, self.cfg.n_mels, self.cfg.frame_hop)
    }
}

/// Log mel filterbank features of a waveform.
pub fn logfbank(w: &Waveform, cfg: &FbankConfig) -> Result<FeatureSequence> {
    Fbank::new(cfg)?.extract(w)
}

/// Per-utterance mean and variance normalization.
///
/// Dimensions whose variance is below [`CMVN_VAR_FLOOR`] are only mean
/// subtracted.
pub fn cmvn(f: &FeatureSequence) -> Result<FeatureSequence> {
    if f.num_frames < 2 {
        return Err(Error::invalid("CMVN needs at least two frames"));
    }
    let (mean, var) = f.moments();
    let scale: Vec<f64> = var
        .iter()
        .map(|&v| if v < CMVN_VAR_FLOOR { 1.0 } else { 1.0 / v.sqrt() })
        .collect();
    let mut data = f.data.clone();
    for row in data.chunks_mut(f.dim) {
        for ((x, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *x = (*x - m) * s;
        }
    }
    let mut out = FeatureSequence::new(data, f.num_frames, f.dim, f.frame_hop)?;
    out.normalized = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, DEFAULT_SAMPLE_RATE).unwrap()
    }

    fn noise(n: usize, amp: f64, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        wave((0..n).map(|_| rng.gen_range(-amp..amp)).collect())
    }

    fn spec(snr: f64) -> MixSpec {
        MixSpec {
            target_snr_db: snr,
            num_sources: 2,
            pad_noise_amplitude: DEFAULT_PAD_NOISE,
        }
    }

    #[test]
    fn waveform_rejects_empty_and_nan() {
        assert!(Waveform::new(vec![], 16000).is_err());
        assert!(Waveform::new(vec![0.0, f64::NAN], 16000).is_err());
    }

    #[test]
    fn equal_energy_zero_db_gives_unit_gain() {
        let a = wave(vec![1.0, -1.0, 1.0, -1.0]);
        let b = wave(vec![-1.0, 1.0, 1.0, -1.0]);
        let (_, g) = mix_at_snr(&a, &[b], &spec(0.0)).unwrap();
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn four_times_energy_gives_half_gain() {
        let a = wave(vec![1.0, -1.0, 1.0, -1.0]);
        let b = wave(vec![2.0, 2.0, -2.0, -2.0]);
        let (_, g) = mix_at_snr(&a, &[b], &spec(0.0)).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn twenty_db_gives_tenth_gain() {
        let a = wave(vec![0.5, -0.5, 0.5]);
        let b = wave(vec![-0.5, 0.5, 0.5]);
        let (_, g) = mix_at_snr(&a, &[b], &spec(20.0)).unwrap();
        assert!((g[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mix_rejects_length_mismatch_and_silence() {
        let a = wave(vec![1.0, 1.0]);
        assert!(mix_at_snr(&a, &[wave(vec![1.0])], &spec(0.0)).is_err());
        assert!(mix_at_snr(&a, &[wave(vec![0.0, 0.0])], &spec(0.0)).is_err());
        assert!(mix_at_snr(&wave(vec![0.0, 0.0]), std::slice::from_ref(&a), &spec(0.0)).is_err());
    }

    #[test]
    fn mix_is_sum_of_scaled_sources() {
        let a = noise(300, 0.5, 1);
        let b = noise(300, 0.2, 2);
        let c = noise(300, 0.9, 3);
        let (m, g) = mix_with_snrs(&a, &[b.clone(), c.clone()], &[5.0, 12.0]).unwrap();
        for n in 0..300 {
            let expect = a.samples[n] + g[0] * b.samples[n] + g[1] * c.samples[n];
            assert_eq!(m.samples[n], expect);
        }
    }

    #[test]
    fn pad_identity_and_split() {
        let w = wave(vec![0.1, 0.2, 0.3]);
        assert_eq!(pad_to_length(&w, 3, 1e-4, 7).unwrap(), w);
        assert_eq!(pad_split(5), (3, 2));
        let p = pad_to_length(&w, 7, 0.0, 7).unwrap();
        assert_eq!(p.samples, vec![0.0, 0.0, 0.1, 0.2, 0.3, 0.0, 0.0]);
        let p = pad_to_length(&w, 8, 1e-4, 7).unwrap();
        assert_eq!(&p.samples[3..6], &w.samples[..]);
        assert!(p.samples[..3].iter().all(|s| s.abs() <= 1e-4));
        assert!(pad_to_length(&w, 2, 0.0, 0).is_err());
    }

    #[test]
    fn fbank_frame_count() {
        let cfg = FbankConfig::default();
        assert_eq!(cfg.frame_len_samples(), 400);
        assert_eq!(cfg.hop_samples(), 160);
        assert_eq!(cfg.fft_size(), 512);
        for frames in 1..6 {
            let n = cfg.samples_for_frames(frames);
            assert_eq!(cfg.num_frames(n), frames);
            assert_eq!(cfg.num_frames(n + 159), frames);
        }
        let f = logfbank(&noise(400 + 160 * 9 + 5, 0.3, 4), &cfg).unwrap();
        assert_eq!((f.num_frames, f.dim), (10, 40));
        assert!(logfbank(&noise(399, 0.3, 4), &cfg).is_err());
    }

    #[test]
    fn silence_hits_floor() {
        let cfg = FbankConfig::default();
        let f = logfbank(&wave(vec![0.0; 1200]), &cfg).unwrap();
        assert!(f.data.iter().all(|&v| v == cfg.floor.ln()));
    }

    #[test]
    fn sinusoid_at_center_dominates_neighbors() {
        let cfg = FbankConfig {
            n_mels: 16,
            ..FbankConfig::default()
        };
        let edges = mel_filter_edges(cfg.n_mels, cfg.sample_rate);
        for m in [3usize, 7, 11] {
            let f0 = edges[m].1;
            let sr = cfg.sample_rate as f64;
            let w = wave(
                (0..4000)
                    .map(|n| 0.5 * (2.0 * std::f64::consts::PI * f0 * n as f64 / sr).sin())
                    .collect(),
            );
            let f = logfbank(&w, &cfg).unwrap();
            for t in 0..f.num_frames {
                assert!(f.get(t, m) > f.get(t, m - 1), "filter {m} frame {t}");
                assert!(f.get(t, m) > f.get(t, m + 1), "filter {m} frame {t}");
            }
        }
    }

    #[test]
    fn doubling_amplitude_adds_log4() {
        let cfg = FbankConfig::default();
        let w = noise(2000, 0.3, 9);
        let a = logfbank(&w, &cfg).unwrap();
        let b = logfbank(&w.scaled(2.0), &cfg).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((y - x - 4f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn cmvn_cases() {
        let f = FeatureSequence::new(vec![0.0, 5.0, 2.0, 5.0], 2, 2, 0.01).unwrap();
        let n = cmvn(&f).unwrap();
        assert_eq!(n.data, vec![-1.0, 0.0, 1.0, 0.0]);
        assert!(n.normalized);
        let one = FeatureSequence::new(vec![1.0], 1, 1, 0.01).unwrap();
        assert!(cmvn(&one).is_err());
    }

    #[test]
    fn cmvn_is_idempotent_and_normalizes() {
        let f = logfbank(&noise(3000, 0.2, 11), &FbankConfig::default()).unwrap();
        let once = cmvn(&f).unwrap();
        let twice = cmvn(&once).unwrap();
        for (a, b) in once.data.iter().zip(&twice.data) {
            assert!((a - b).abs() < 1e-9);
        }
        let (mean, var) = once.moments();
        assert!(mean.iter().all(|m| m.abs() < 1e-6));
        assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }
}
