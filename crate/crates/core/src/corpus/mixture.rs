use super::{derive_seed, LabelId, MixtureSample, Utterance, SILENCE};
use crate::dsp::{cmvn, mix_with_snrs, pad_split, pad_to_length, Fbank, FeatureSequence, Waveform};
use crate::error::{Error, Result};

/// Pads a label sequence with silence, front-biased like waveform padding.
pub fn pad_labels(labels: &[LabelId], length: usize) -> Result<Vec<LabelId>> {
    if length < labels.len() {
        return Err(Error::invalid("cannot pad labels to a shorter length"));
    }
    let (front, back) = pad_split(length - labels.len());
    let mut out = vec![SILENCE; front];
    out.extend_from_slice(labels);
    out.extend(std::iter::repeat_n(SILENCE, back));
    Ok(out)
}

/// Fraction of frames where at least two streams are non-silence.
pub fn overlap_fraction(labels: &[Vec<LabelId>]) -> f64 {
    let t = labels.iter().map(Vec::len).max().unwrap_or(0);
    if t == 0 {
        return 0.0;
    }
    let busy = (0..t)
        .filter(|&i| {
            labels
                .iter()
                .filter(|l| l.get(i).is_some_and(|&y| y != SILENCE))
                .count()
                >= 2
        })
        .count();
    busy as f64 / t as f64
}

/// Whether the sources are long enough relative to each other to be mixed.
pub fn lengths_compatible(frames: &[usize]) -> bool {
    let max = frames.iter().copied().max().unwrap_or(0);
    let min = frames.iter().copied().min().unwrap_or(0);
    2 * min >= max
}

/// Mixes `sources` with every interferer at `snr_db` below source 0.
pub fn make_mixture(
    sources: &[Utterance],
    snr_db: f64,
    rng_seed: u64,
    fbank: &Fbank,
    pad_noise: f64,
) -> Result<MixtureSample> {
    let snrs = vec![snr_db; sources.len().saturating_sub(1)];
    make_mixture_with_snrs(sources, &snrs, rng_seed, fbank, pad_noise)
}

/// Like [`make_mixture`] with one SNR per interferer. The recorded
/// `snr_db` is their mean.
pub fn make_mixture_with_snrs(
    sources: &[Utterance],
    snrs_db: &[f64],
    rng_seed: u64,
    fbank: &Fbank,
    pad_noise: f64,
) -> Result<MixtureSample> {
    let s = sources.len();
    if s < 2 {
        return Err(Error::invalid("a mixture needs at least two sources"));
    }
    if snrs_db.len() + 1 != s {
        return Err(Error::invalid("one SNR per interferer required"));
    }
    for i in 0..s {
        for j in i + 1..s {
            if sources[i].speaker_id == sources[j].speaker_id {
                return Err(Error::invalid(format!(
                    "speaker {} appears twice in one mixture",
                    sources[i].speaker_id
                )));
            }
        }
    }
    let frames: Vec<usize> = sources.iter().map(|u| u.labels.len()).collect();
    if !lengths_compatible(&frames) {
        return Err(Error::invalid(format!(
            "overlap constraint violated: source lengths {frames:?}"
        )));
    }
    let cfg = fbank.config();
    let t = *frames.iter().max().unwrap();
    let n = cfg.samples_for_frames(t);
    let padded: Vec<Waveform> = sources
        .iter()
        .enumerate()
        .map(|(k, u)| {
            if cfg.num_frames(u.waveform.len()) != u.labels.len() {
                return Err(Error::invalid(format!(
                    "source {k}: {} labels for a {}-frame waveform",
                    u.labels.len(),
                    cfg.num_frames(u.waveform.len())
                )));
            }
            pad_to_length(&u.waveform, n, pad_noise, derive_seed(rng_seed, &[k as u64]))
        })
        .collect::<Result<_>>()?;
    let (mixed, interferer_gains) = mix_with_snrs(&padded[0], &padded[1..], snrs_db)?;
    let mut gains = vec![1.0];
    gains.extend(interferer_gains);

    let normalized = |w: &Waveform| -> Result<FeatureSequence> { cmvn(&fbank.extract(w)?) };
    let mixed_features = normalized(&mixed)?;
    let source_features = padded
        .iter()
        .zip(&gains)
        .map(|(w, &g)| normalized(&w.scaled(g)))
        .collect::<Result<Vec<_>>>()?;
    let source_labels = sources
        .iter()
        .map(|u| pad_labels(&u.labels, t))
        .collect::<Result<Vec<_>>>()?;
    let num_labels = sources[0].num_labels;
    if sources.iter().any(|u| u.num_labels != num_labels) {
        return Err(Error::invalid("sources use different label sets"));
    }
    let sample = MixtureSample {
        mixed_features,
        source_features,
        source_labels,
        snr_db: snrs_db.iter().sum::<f64>() / snrs_db.len() as f64,
        speaker_ids: sources.iter().map(|u| u.speaker_id).collect(),
        gains,
        num_labels,
    };
    sample.validate()?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_utterance, ScriptItem, SpeakerProfile};
    use crate::dsp::{snr_db, FbankConfig};

    fn fbank() -> Fbank {
        Fbank::new(&FbankConfig {
            n_mels: 16,
            ..FbankConfig::default()
        })
        .unwrap()
    }

    fn utt(id: u32, frames: &[(usize, usize)]) -> Utterance {
        let p = SpeakerProfile::generate(id, 21, 3);
        let script: Vec<ScriptItem> = frames
            .iter()
            .map(|&(label, frames)| ScriptItem { label, frames })
            .collect();
        synth_utterance(&p, &script, fbank().config(), id as u64).unwrap()
    }

    #[test]
    fn label_padding_split() {
        assert_eq!(pad_labels(&[3, 4], 2).unwrap(), vec![3, 4]);
        let p = pad_labels(&[3, 4], 8).unwrap();
        assert_eq!(p, vec![0, 0, 0, 3, 4, 0, 0, 0]);
        assert_eq!(pad_labels(&[5], 4).unwrap(), vec![0, 0, 5, 0]);
        assert!(pad_labels(&[1, 2, 3], 2).is_err());
    }

    #[test]
    fn overlap_counts_double_activity() {
        let l = vec![vec![0, 1, 1, 2], vec![3, 3, 0, 4]];
        assert_eq!(overlap_fraction(&l), 0.5);
    }

    #[test]
    fn equal_length_sources_need_no_padding() {
        let a = utt(0, &[(1, 6), (2, 6)]);
        let b = utt(1, &[(3, 4), (4, 8)]);
        let m = make_mixture(&[a.clone(), b.clone()], 0.0, 9, &fbank(), 1e-4).unwrap();
        assert_eq!(m.source_labels, vec![a.labels, b.labels]);
        assert_eq!(m.num_frames(), 12);
        assert_eq!(m.gains[0], 1.0);
    }

    #[test]
    fn shorter_source_is_padded_with_silence() {
        let a = utt(0, &[(1, 10), (2, 10)]);
        let b = utt(1, &[(3, 7), (4, 7)]);
        let m = make_mixture(&[a, b.clone()], 5.0, 9, &fbank(), 1e-4).unwrap();
        assert_eq!(m.num_frames(), 20);
        assert_eq!(&m.source_labels[1][..3], &[0, 0, 0]);
        assert_eq!(&m.source_labels[1][17..], &[0, 0, 0]);
        assert_eq!(&m.source_labels[1][3..17], &b.labels[..]);
    }

    #[test]
    fn rejects_collisions_and_short_sources() {
        let a = utt(0, &[(1, 10), (2, 10)]);
        let a2 = utt(0, &[(3, 10), (4, 10)]);
        let short = utt(1, &[(3, 9)]);
        assert!(make_mixture(&[a.clone(), a2], 0.0, 1, &fbank(), 1e-4).is_err());
        assert!(make_mixture(&[a.clone(), short], 0.0, 1, &fbank(), 1e-4).is_err());
        assert!(make_mixture(&[a], 0.0, 1, &fbank(), 1e-4).is_err());
    }

    #[test]
    fn gains_hit_requested_snr() {
        let fb = fbank();
        let a = utt(0, &[(1, 10), (2, 10)]);
        let b = utt(1, &[(3, 8), (4, 8)]);
        let n = fb.config().samples_for_frames(20);
        let pa = pad_to_length(&a.waveform, n, 1e-4, derive_seed(4, &[0])).unwrap();
        let pb = pad_to_length(&b.waveform, n, 1e-4, derive_seed(4, &[1])).unwrap();
        let m = make_mixture(&[a, b], 10.0, 4, &fb, 1e-4).unwrap();
        let measured = snr_db(&pa.samples, &pb.scaled(m.gains[1]).samples);
        assert!((measured - 10.0).abs() < 1e-6);
    }
}
