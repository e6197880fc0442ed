//! Permutation-optimal scoring of decoded unit sequences.

use std::fmt::Write as _;

use crate::corpus::MixtureSample;
use crate::error::{Error, Result};
use crate::models::{collapse, frame_labels, Model};

/// Edit counts from one optimal alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub distance: usize,
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.distance += o.distance;
        self.subs += o.subs;
        self.dels += o.dels;
        self.ins += o.ins;
    }
}

/// Unit-cost edit distance from `reference` to `hyp`.
///
/// A deletion is a reference unit missing from the hypothesis. When several
/// alignments are optimal the backtrace prefers substitution (or match),
/// then deletion, then insertion.
pub fn levenshtein(hyp: &[usize], reference: &[usize]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut c = EditCounts {
        distance: d[n * w + m],
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let miss = usize::from(reference[i - 1] != hyp[j - 1]);
            if d[(i - 1) * w + j - 1] + miss == here {
                c.subs += miss;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            c.dels += 1;
            i -= 1;
        } else {
            c.ins += 1;
            j -= 1;
        }
    }
    debug_assert_eq!(c.subs + c.dels + c.ins, c.distance);
    c
}

/// All ordered selections of `k` distinct indices from `0..n`, in
/// lexicographic order. For `k == n` these are the permutations.
pub fn injections(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, k, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(n, k, &mut Vec::new(), &mut vec![false; n], &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentScore {
    /// Hypothesis stream `s` is scored against reference `perm[s]`.
    pub perm: Vec<usize>,
    pub total: usize,
    /// Indexed by hypothesis stream.
    pub per_stream: Vec<EditCounts>,
}

/// Assignment of hypotheses to references minimizing the summed edit
/// distance; ties resolve to the lexicographically first permutation.
pub fn best_assignment_score(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> Result<AssignmentScore> {
    if hyps.len() != refs.len() || hyps.is_empty() {
        return Err(Error::invalid(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let s = hyps.len();
    let table: Vec<Vec<EditCounts>> = hyps
        .iter()
        .map(|h| refs.iter().map(|r| levenshtein(h, r)).collect())
        .collect();
    let mut best: Option<AssignmentScore> = None;
    for perm in injections(s, s) {
        let total = perm.iter().enumerate().map(|(h, &r)| table[h][r].distance).sum();
        if best.as_ref().is_none_or(|b| total < b.total) {
            let per_stream = perm.iter().enumerate().map(|(h, &r)| table[h][r]).collect();
            best = Some(AssignmentScore {
                perm,
                total,
                per_stream,
            });
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionScore {
    /// Reference `r` is scored against hypothesis stream `injection[r]`.
    pub injection: Vec<usize>,
    pub total: usize,
    /// Indexed by reference.
    pub per_ref: Vec<EditCounts>,
    /// Hypothesis streams left unpaired, ascending.
    pub surplus: Vec<usize>,
}

/// Best pairing of every reference with a distinct hypothesis stream when
/// there are more hypotheses than references.
pub fn best_injection_score(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> Result<InjectionScore> {
    if refs.is_empty() || hyps.len() <= refs.len() {
        return Err(Error::invalid(format!(
            "cross-count scoring needs more hypotheses ({}) than references ({})",
            hyps.len(),
            refs.len()
        )));
    }
    let table: Vec<Vec<EditCounts>> = refs
        .iter()
        .map(|r| hyps.iter().map(|h| levenshtein(h, r)).collect())
        .collect();
    let mut best: Option<InjectionScore> = None;
    for inj in injections(hyps.len(), refs.len()) {
        let total = inj.iter().enumerate().map(|(r, &h)| table[r][h].distance).sum();
        if best.as_ref().is_none_or(|b| total < b.total) {
            let per_ref = inj.iter().enumerate().map(|(r, &h)| table[r][h]).collect();
            let surplus = (0..hyps.len()).filter(|h| !inj.contains(h)).collect();
            best = Some(InjectionScore {
                injection: inj,
                total,
                per_ref,
                surplus,
            });
        }
    }
    Ok(best.unwrap())
}

/// Frame errors per reference under the injection of references into
/// hypothesis streams that minimizes total frame errors.
fn frame_errors(pred: &[Vec<usize>], refs: &[Vec<usize>]) -> Vec<usize> {
    let table: Vec<Vec<usize>> = refs
        .iter()
        .map(|r| {
            pred.iter()
                .map(|p| p.iter().zip(r).filter(|(a, b)| a != b).count())
                .collect()
        })
        .collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    for inj in injections(pred.len(), refs.len()) {
        let per: Vec<usize> = inj.iter().enumerate().map(|(r, &h)| table[r][h]).collect();
        let total = per.iter().sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, per));
        }
    }
    best.unwrap().1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StreamRole {
    /// The SNR-reference (louder) speaker.
    High,
    /// The interfering speakers.
    Low,
    All,
}

impl StreamRole {
    pub fn name(self) -> &'static str {
        match self {
            StreamRole::High => "high",
            StreamRole::Low => "low",
            StreamRole::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `None` aggregates every SNR.
    pub snr_db: Option<f64>,
    pub role: StreamRole,
    pub n_utts: usize,
    pub edits: EditCounts,
    pub ref_units: usize,
    pub frames: usize,
    pub frame_errors: usize,
}

impl ReportRow {
    /// Edits over reference units; above 1 when insertions dominate.
    pub fn unit_err(&self) -> f64 {
        if self.ref_units == 0 {
            if self.edits.distance == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.edits.distance as f64 / self.ref_units as f64
        }
    }

    pub fn frame_err(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurplusStats {
    pub streams: usize,
    /// Mean decoded length over all unpaired hypothesis streams.
    pub mean_decoded_len: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Ascending SNR, roles high, low, all; then the all-SNR rows.
    pub rows: Vec<ReportRow>,
    pub surplus: Option<SurplusStats>,
}

pub const REPORT_HEADER: &str = "snr_db,stream_role,n_utts,unit_err,frame_err,subs,dels,ins";

impl ScoreReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let snr = r.snr_db.map_or("all".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{snr},{},{},{:.6},{:.6},{},{},{}",
                r.role.name(),
                r.n_utts,
                r.unit_err(),
                r.frame_err(),
                r.edits.subs,
                r.edits.dels,
                r.edits.ins
            )
            .unwrap();
        }
        out
    }

    pub fn row(&self, snr_db: Option<f64>, role: StreamRole) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.snr_db == snr_db && r.role == role)
    }

    /// The all-SNR, all-stream row.
    pub fn overall(&self) -> &ReportRow {
        self.row(None, StreamRole::All).expect("report has a total row")
    }
}

/// Scores per-stream frame-label predictions against each sample's
/// references. Streams beyond the sample's source count are surplus.
pub fn score_predictions(samples: &[MixtureSample], predictions: &[Vec<Vec<usize>>]) -> Result<ScoreReport> {
    if samples.len() != predictions.len() {
        return Err(Error::invalid("one prediction per sample required"));
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut surplus_streams = 0;
    let mut surplus_len = 0;
    let mut cross = false;
    for (sample, pred) in samples.iter().zip(predictions) {
        let refs = &sample.source_labels;
        if pred.len() < refs.len() {
            return Err(Error::invalid(format!(
                "{} hypothesis streams for {} references",
                pred.len(),
                refs.len()
            )));
        }
        if pred.iter().any(|p| p.len() != sample.num_frames()) {
            return Err(Error::shape("prediction length differs from frame count"));
        }
        let hyp_units: Vec<Vec<usize>> = pred.iter().map(|p| collapse(p)).collect();
        let ref_units: Vec<Vec<usize>> = refs.iter().map(|r| collapse(r)).collect();
        let per_ref: Vec<EditCounts> = if pred.len() == refs.len() {
            let score = best_assignment_score(&hyp_units, &ref_units)?;
            let mut per = vec![EditCounts::default(); refs.len()];
            for (h, &r) in score.perm.iter().enumerate() {
                per[r] = score.per_stream[h];
            }
            per
        } else {
            cross = true;
            let score = best_injection_score(&hyp_units, &ref_units)?;
            surplus_streams += score.surplus.len();
            surplus_len += score.surplus.iter().map(|&h| hyp_units[h].len()).sum::<usize>();
            score.per_ref
        };
        let frame_err = frame_errors(pred, refs);
        let snr = Some(sample.snr_db);
        for (r, (edits, ferr)) in per_ref.iter().zip(&frame_err).enumerate() {
            let role = if r == 0 { StreamRole::High } else { StreamRole::Low };
            for key in [(snr, role), (snr, StreamRole::All), (None, role), (None, StreamRole::All)] {
                let idx = match rows.iter().position(|x| (x.snr_db, x.role) == key) {
                    Some(i) => i,
                    None => {
                        rows.push(ReportRow {
                            snr_db: key.0,
                            role: key.1,
                            n_utts: 0,
                            edits: EditCounts::default(),
                            ref_units: 0,
                            frames: 0,
                            frame_errors: 0,
                        });
                        rows.len() - 1
                    }
                };
                let row = &mut rows[idx];
                row.edits += *edits;
                row.ref_units += ref_units[r].len();
                row.frames += refs[r].len();
                row.frame_errors += ferr;
            }
        }
        let mut seen: Vec<(Option<f64>, StreamRole)> = Vec::new();
        for r in 0..refs.len() {
            let role = if r == 0 { StreamRole::High } else { StreamRole::Low };
            for key in [(snr, role), (snr, StreamRole::All), (None, role), (None, StreamRole::All)] {
                if !seen.contains(&key) {
                    seen.push(key);
                    rows.iter_mut().find(|x| (x.snr_db, x.role) == key).unwrap().n_utts += 1;
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        let key = |r: &ReportRow| (r.snr_db.is_none(), r.snr_db.unwrap_or(0.0));
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.role.cmp(&b.role))
    });
    let surplus = cross.then(|| SurplusStats {
        streams: surplus_streams,
        mean_decoded_len: if surplus_streams == 0 {
            0.0
        } else {
            surplus_len as f64 / surplus_streams as f64
        },
    });
    Ok(ScoreReport { rows, surplus })
}

/// Per-stream argmax frame labels of the model on each sample.
pub fn predict(model: &Model, samples: &[MixtureSample]) -> Result<Vec<Vec<Vec<usize>>>> {
    samples
        .iter()
        .map(|s| {
            let out = model.forward(&s.mixed_features)?;
            Ok(out.stream_logits.unwrap().iter().map(frame_labels).collect())
        })
        .collect()
}

/// Decodes and scores every sample; the model's stream count must equal the
/// dataset's.
pub fn score_dataset(model: &Model, samples: &[MixtureSample]) -> Result<ScoreReport> {
    if let Some(s) = samples.iter().find(|s| s.num_sources() != model.cfg.num_streams) {
        return Err(Error::invalid(format!(
            "{}-stream model given {}-source data; use cross-count scoring",
            model.cfg.num_streams,
            s.num_sources()
        )));
    }
    score_predictions(samples, &predict(model, samples)?)
}

/// Scores a model with more streams than the data has sources.
pub fn cross_count_eval(model: &Model, samples: &[MixtureSample]) -> Result<ScoreReport> {
    if let Some(s) = samples.iter().find(|s| s.num_sources() >= model.cfg.num_streams) {
        return Err(Error::invalid(format!(
            "cross-count scoring needs fewer sources than the model's {} streams, got {}",
            model.cfg.num_streams,
            s.num_sources()
        )));
    }
    score_predictions(samples, &predict(model, samples)?)
}
