//! Dataset assembly: speaker splits, mixture sampling, and split files.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{read_manifest, read_sample, write_manifest, write_sample, ManifestRecord};
use super::mixture::{lengths_compatible, make_mixture_with_snrs, overlap_fraction, pad_labels};
use super::synth::{random_script, synth_utterance, SpeakerProfile};
use super::{derive_seed, MixtureSample, Utterance, DEFAULT_NUM_LABELS};
use crate::dsp::{Fbank, FbankConfig, FeatureSequence, DEFAULT_PAD_NOISE};
use crate::error::{Error, Result};

/// Minimum fraction of frames with two or more active speakers.
pub const MIN_OVERLAP: f64 = 0.5;
const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub num_speakers: u32,
    /// Total mixtures over all three splits.
    pub num_mixtures: usize,
    pub num_sources: usize,
    pub snr_grid: Vec<f64>,
    pub num_labels: usize,
    pub utts_per_speaker: usize,
    /// Inclusive range of units per utterance.
    pub units_per_utt: [usize; 2],
    /// Inclusive range of frames per unit.
    pub unit_frames: [usize; 2],
    pub pad_noise_amplitude: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            num_speakers: 20,
            num_mixtures: 400,
            num_sources: 2,
            snr_grid: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            num_labels: DEFAULT_NUM_LABELS,
            utts_per_speaker: 128,
            units_per_utt: [8, 12],
            unit_frames: [5, 9],
            pad_noise_amplitude: DEFAULT_PAD_NOISE,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("corpus: {m}")));
        if self.num_sources < 2 || self.num_sources > crate::pit::MAX_STREAMS {
            return bad(format!("num_sources {} outside [2, 6]", self.num_sources));
        }
        if let Err(e) = split_speakers(self.num_speakers, self.num_sources) {
            return bad(e.to_string());
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid must be a non-empty list of finite values".into());
        }
        if self.num_labels < 2 {
            return bad("num_labels must include silence and at least one unit".into());
        }
        if self.utts_per_speaker == 0 {
            return bad("utts_per_speaker must be positive".into());
        }
        if self.units_per_utt[0] == 0 || self.units_per_utt[0] > self.units_per_utt[1] {
            return bad("units_per_utt must be a non-empty range starting at >= 1".into());
        }
        if self.unit_frames[0] == 0 || self.unit_frames[0] > self.unit_frames[1] {
            return bad("unit_frames must be a non-empty range starting at >= 1".into());
        }
        if !(self.pad_noise_amplitude >= 0.0) {
            return bad("pad_noise_amplitude must be >= 0".into());
        }
        let fractions_ok = |f: f64| (0.0..1.0).contains(&f);
        if !fractions_ok(self.valid_fraction)
            || !fractions_ok(self.test_fraction)
            || self.valid_fraction + self.test_fraction >= 1.0
        {
            return bad("valid/test fractions must leave room for training".into());
        }
        Ok(())
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        let valid = (self.num_mixtures as f64 * self.valid_fraction).round() as usize;
        let test = (self.num_mixtures as f64 * self.test_fraction).round() as usize;
        [self.num_mixtures - valid - test, valid, test]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Valid, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Valid => "valid",
            SplitKind::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SplitKind::Train => 11,
            SplitKind::Valid => 12,
            SplitKind::Test => 13,
        }
    }
}

/// Speaker-disjoint pools: odd ids test; even ids train, with the top
/// `max(S + 1, ceil(n_even / 4))` even ids held out for validation.
pub fn split_speakers(num_speakers: u32, num_sources: usize) -> Result<[Vec<u32>; 3]> {
    let test: Vec<u32> = (0..num_speakers).filter(|id| id % 2 == 1).collect();
    let even: Vec<u32> = (0..num_speakers).filter(|id| id % 2 == 0).collect();
    let n_valid = (num_sources + 1).max(even.len().div_ceil(4));
    if even.len() < n_valid + num_sources || test.len() < num_sources {
        return Err(Error::invalid(format!(
            "{num_speakers} speakers are too few for speaker-disjoint {num_sources}-talker splits"
        )));
    }
    let valid = even[even.len() - n_valid..].to_vec();
    let train = even[..even.len() - n_valid].to_vec();
    Ok([train, valid, test])
}

/// Config fingerprint: SHA-256 over the serialized generation parameters.
pub fn fingerprint(corpus: &CorpusConfig, fbank: &FbankConfig, seed: u64) -> String {
    #[derive(Serialize)]
    struct Fp<'a> {
        seed: u64,
        corpus: &'a CorpusConfig,
        fbank: &'a FbankConfig,
    }
    let text = toml::to_string(&Fp {
        seed,
        corpus,
        fbank,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn utterance_pool(
    corpus: &CorpusConfig,
    fbank: &FbankConfig,
    speakers: &[u32],
    seed: u64,
) -> Result<Vec<Vec<Utterance>>> {
    speakers
        .iter()
        .map(|&id| {
            let profile = SpeakerProfile::generate(id, corpus.num_labels, seed);
            (0..corpus.utts_per_speaker)
                .map(|j| {
                    let useed = derive_seed(seed, &[1, id as u64, j as u64]);
                    let mut rng = ChaCha8Rng::seed_from_u64(useed);
                    let script = random_script(
                        &mut rng,
                        corpus.num_labels,
                        (corpus.units_per_utt[0], corpus.units_per_utt[1]),
                        (corpus.unit_frames[0], corpus.unit_frames[1]),
                    );
                    synth_utterance(&profile, &script, fbank, useed)
                })
                .collect()
        })
        .collect()
}

fn quantize(f: &mut FeatureSequence) {
    f.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Rounds every stored real to f32 so in-memory samples equal their
/// serialized form.
pub fn quantize_sample(s: &mut MixtureSample) {
    quantize(&mut s.mixed_features);
    s.source_features.iter_mut().for_each(quantize);
    s.snr_db = s.snr_db as f32 as f64;
    s.gains.iter_mut().for_each(|g| *g = *g as f32 as f64);
}

/// SNRs (dB below the reference) for the interferers of mixture `index`.
fn interferer_snrs(
    corpus: &CorpusConfig,
    kind: SplitKind,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let s = corpus.num_sources;
    if s == 2 {
        vec![corpus.snr_grid[index % corpus.snr_grid.len()]]
    } else if kind == SplitKind::Test {
        vec![0.0; s - 1]
    } else {
        let lo = corpus.snr_grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = corpus.snr_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..s - 1)
            .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect()
    }
}

/// Generates `num_mixtures` samples for one split from the given speakers.
///
/// Two-talker sets cycle through the SNR grid; three-or-more-talker training
/// and validation sets draw interferer SNRs uniformly over the grid's range;
/// test sets with three or more talkers mix all sources at equal energy.
/// Every sample derives its own seed from `(seed, split, index)`.
pub fn generate_split(
    corpus: &CorpusConfig,
    fbank: &FbankConfig,
    kind: SplitKind,
    speakers: &[u32],
    num_mixtures: usize,
    seed: u64,
) -> Result<Vec<MixtureSample>> {
    corpus.validate()?;
    let s = corpus.num_sources;
    if speakers.len() < s {
        return Err(Error::invalid(format!(
            "{} speakers cannot form {s}-talker mixtures",
            speakers.len()
        )));
    }
    let fb = Fbank::new(fbank)?;
    let pool = utterance_pool(corpus, fbank, speakers, seed)?;
    let mut out = Vec::with_capacity(num_mixtures);
    for i in 0..num_mixtures {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[kind.tag(), i as u64]));
        let snrs = interferer_snrs(corpus, kind, i, &mut rng);
        let mut chosen = None;
        for _ in 0..MAX_DRAWS {
            let spk: Vec<usize> = (0..speakers.len())
                .collect::<Vec<_>>()
                .choose_multiple(&mut rng, s)
                .copied()
                .collect();
            let utts: Vec<&Utterance> = spk
                .iter()
                .map(|&k| &pool[k][rng.gen_range(0..pool[k].len())])
                .collect();
            let frames: Vec<usize> = utts.iter().map(|u| u.labels.len()).collect();
            if !lengths_compatible(&frames) {
                continue;
            }
            let t = *frames.iter().max().unwrap();
            let padded: Vec<Vec<usize>> = utts
                .iter()
                .map(|u| pad_labels(&u.labels, t))
                .collect::<Result<_>>()?;
            if overlap_fraction(&padded) >= MIN_OVERLAP {
                chosen = Some(utts.into_iter().cloned().collect::<Vec<_>>());
                break;
            }
        }
        let sources = chosen.ok_or_else(|| {
            Error::invalid("could not draw sources satisfying the overlap constraint")
        })?;
        let mix_seed = derive_seed(seed, &[kind.tag(), i as u64, 7]);
        let mut sample =
            make_mixture_with_snrs(&sources, &snrs, mix_seed, &fb, corpus.pad_noise_amplitude)?;
        quantize_sample(&mut sample);
        out.push(sample);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: SplitKind,
    pub fingerprint: String,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn file_name(split: SplitKind) -> String {
        format!("{}.manifest", split.name())
    }

    pub fn load(dir: &Path, split: SplitKind) -> Result<Self> {
        let (fingerprint, records) = read_manifest(&dir.join(Self::file_name(split)))?;
        Ok(DatasetManifest {
            split,
            fingerprint,
            records,
        })
    }

    pub fn num_sources(&self) -> Option<usize> {
        self.records.first().map(|r| r.num_sources)
    }
}

/// Writes one split as `<split>.bin` plus `<split>.manifest`.
pub fn write_split(
    dir: &Path,
    split: SplitKind,
    fingerprint: &str,
    samples: &[MixtureSample],
) -> Result<DatasetManifest> {
    let file = format!("{}.bin", split.name());
    let mut bytes = Vec::new();
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        records.push(ManifestRecord {
            file: file.clone(),
            offset: bytes.len() as u64,
            num_sources: s.num_sources(),
            num_frames: s.num_frames(),
            snr_db: s.snr_db as f32,
            speaker_ids: s.speaker_ids.clone(),
        });
        write_sample(&mut bytes, s)?;
    }
    fs::write(dir.join(&file), &bytes)?;
    write_manifest(&dir.join(DatasetManifest::file_name(split)), fingerprint, &records)?;
    Ok(DatasetManifest {
        split,
        fingerprint: fingerprint.to_string(),
        records,
    })
}

/// Loads every sample of a split, checking each against its manifest line.
pub fn load_split(dir: &Path, split: SplitKind, frame_hop: f64) -> Result<(DatasetManifest, Vec<MixtureSample>)> {
    let manifest = DatasetManifest::load(dir, split)?;
    let mut cache: Vec<(String, Vec<u8>)> = Vec::new();
    let mut samples = Vec::with_capacity(manifest.records.len());
    for rec in &manifest.records {
        if !cache.iter().any(|(f, _)| *f == rec.file) {
            cache.push((rec.file.clone(), fs::read(dir.join(&rec.file))?));
        }
        let bytes = &cache.iter().find(|(f, _)| *f == rec.file).unwrap().1;
        let start = rec.offset as usize;
        if start >= bytes.len() {
            return Err(Error::format(format!("offset {start} beyond {}", rec.file)));
        }
        let sample = read_sample(&mut &bytes[start..], frame_hop)?;
        if sample.num_sources() != rec.num_sources
            || sample.num_frames() != rec.num_frames
            || sample.speaker_ids != rec.speaker_ids
        {
            return Err(Error::format(format!(
                "record at {}:{} disagrees with its manifest line",
                rec.file, rec.offset
            )));
        }
        samples.push(sample);
    }
    Ok((manifest, samples))
}

/// Generates train/valid/test splits into `out_dir`.
pub fn generate_dataset(
    corpus: &CorpusConfig,
    fbank: &FbankConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<(DatasetManifest, Vec<MixtureSample>)>> {
    corpus.validate()?;
    fs::create_dir_all(out_dir)?;
    let fp = fingerprint(corpus, fbank, seed);
    let pools = split_speakers(corpus.num_speakers, corpus.num_sources)?;
    let sizes = corpus.split_sizes();
    let mut out = Vec::new();
    for (k, split) in SplitKind::ALL.into_iter().enumerate() {
        let samples = generate_split(corpus, fbank, split, &pools[k], sizes[k], seed)?;
        let manifest = write_split(out_dir, split, &fp, &samples)?;
        out.push((manifest, samples));
    }
    Ok(out)
}
