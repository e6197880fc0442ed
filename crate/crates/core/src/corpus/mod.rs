//! Synthetic multi-speaker corpus: speakers, utterances, mixtures, and the
//! on-disk dataset layout.

pub mod dataset;
pub mod format;
pub mod mixture;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::dsp::{FeatureSequence, Waveform};

pub use dataset::{generate_dataset, generate_split, CorpusConfig, DatasetManifest, SplitKind};
pub use format::{read_sample, write_sample, ManifestRecord, SAMPLE_MAGIC};
pub use mixture::{make_mixture, overlap_fraction, pad_labels};
pub use synth::{random_script, synth_utterance, ScriptItem, SpeakerProfile, UnitSignature};

pub type LabelId = usize;

/// The distinguished silence label.
pub const SILENCE: LabelId = 0;
pub const DEFAULT_NUM_LABELS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    A,
    B,
}

/// Single-speaker waveform with one label per feature frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub waveform: Waveform,
    pub labels: Vec<LabelId>,
    pub speaker_id: u32,
    /// Size of the label set the labels are drawn from.
    pub num_labels: usize,
}

/// One training/test example: the mixed features plus per-source references.
///
/// Source 0 is the SNR reference ("high energy") speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample {
    pub mixed_features: FeatureSequence,
    pub source_features: Vec<FeatureSequence>,
    pub source_labels: Vec<Vec<LabelId>>,
    pub snr_db: f64,
    pub speaker_ids: Vec<u32>,
    /// Gain applied to every source; the reference's gain is 1.
    pub gains: Vec<f64>,
    pub num_labels: usize,
}

impl MixtureSample {
    pub fn num_sources(&self) -> usize {
        self.source_features.len()
    }

    pub fn num_frames(&self) -> usize {
        self.mixed_features.num_frames
    }

    pub fn feature_dim(&self) -> usize {
        self.mixed_features.dim
    }

    /// Checks the stream-count and frame-count invariants.
    pub fn validate(&self) -> crate::Result<()> {
        let s = self.num_sources();
        let t = self.num_frames();
        let bad = |m: String| Err(crate::Error::format(m));
        if s == 0
            || self.source_labels.len() != s
            || self.speaker_ids.len() != s
            || self.gains.len() != s
        {
            return bad(format!("inconsistent source count {s}"));
        }
        for (k, f) in self.source_features.iter().enumerate() {
            if f.num_frames != t || f.dim != self.feature_dim() {
                return bad(format!("source {k} features are not {t}x{}", self.feature_dim()));
            }
        }
        for (k, l) in self.source_labels.iter().enumerate() {
            if l.len() != t {
                return bad(format!("source {k} has {} labels for {t} frames", l.len()));
            }
            if l.iter().any(|&y| y >= self.num_labels) {
                return bad(format!("source {k} label out of range"));
            }
        }
        Ok(())
    }
}

/// Child seed for `(master, path...)`, independent of generation order.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}
