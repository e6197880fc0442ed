//! The four multi-talker systems as one parameterized model type.
//!
//! Layer stacks are named `sep.*` (feature separation) and `rec.*`
//! (recognition). Their presence per architecture:
//!
//! | arch | `sep` stack | feature heads | `rec` stack | logit heads |
//! |------|-------------|---------------|-------------|-------------|
//! | A1, A2 | N/2 layers | S | N - N/2 layers on one clean stream | 1 |
//! | A3 | none | 0 | N layers on the mixture | S |
//! | A4 | N/2 layers | S | N - N/2 layers, shared across streams | S |
//!
//! For A1/A2 the `rec` stack is the single-talker recognizer that consumes
//! each separated stream; for A4 stream `s` runs through the shared `rec`
//! stack and then logit head `s`.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{MixtureSample, SILENCE};
use crate::dsp::FeatureSequence;
use crate::error::{Error, Result};
use crate::nn::{
    bidi_layer, linear, BidiParams, Checkpoint, Graph, Initializer, LinearParams, ParamSet,
    Tensor, Var,
};
use crate::pit::{self, PitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "a1_fixed_sep", alias = "A1")]
    A1FixedSep,
    #[serde(rename = "a2_pit_sep", alias = "A2")]
    A2PitSep,
    #[serde(rename = "a3_direct_pit_ce", alias = "A3")]
    A3DirectPitCe,
    #[serde(rename = "a4_joint", alias = "A4")]
    A4Joint,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::A1FixedSep, Arch::A2PitSep, Arch::A3DirectPitCe, Arch::A4Joint];

    /// Checkpoint architecture tag, 1 to 4.
    pub fn tag(self) -> u32 {
        match self {
            Arch::A1FixedSep => 1,
            Arch::A2PitSep => 2,
            Arch::A3DirectPitCe => 3,
            Arch::A4Joint => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.tag() == tag)
            .ok_or_else(|| Error::format(format!("unknown architecture tag {tag}")))
    }

    /// Whether the model has a feature-separation front end.
    pub fn separates(self) -> bool {
        self != Arch::A3DirectPitCe
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::A1FixedSep => "a1_fixed_sep",
            Arch::A2PitSep => "a2_pit_sep",
            Arch::A3DirectPitCe => "a3_direct_pit_ce",
            Arch::A4Joint => "a4_joint",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == lower || a.name()[..2] == lower)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub arch: Arch,
    pub num_streams: usize,
    /// Total recurrent depth; split evenly between stacks for A1, A2, A4.
    pub layers: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub num_labels: usize,
}

impl ArchConfig {
    /// Laptop-scale preset.
    pub fn desk(arch: Arch) -> Self {
        ArchConfig {
            arch,
            num_streams: 2,
            layers: 2,
            hidden: 32,
            feature_dim: 16,
            num_labels: crate::corpus::DEFAULT_NUM_LABELS,
        }
    }

    /// Depth and widths of the published systems.
    pub fn paper(arch: Arch) -> Self {
        ArchConfig {
            layers: 6,
            hidden: 768,
            feature_dim: 40,
            ..ArchConfig::desk(arch)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("architecture: {m}")));
        if self.num_streams < 2 || self.num_streams > pit::MAX_STREAMS {
            return bad(format!("num_streams {} outside [2, 6]", self.num_streams));
        }
        let min_layers = if self.arch.separates() { 2 } else { 1 };
        if self.layers < min_layers {
            return bad(format!("{} needs at least {min_layers} layers", self.arch));
        }
        if self.hidden == 0 || self.feature_dim == 0 || self.num_labels < 2 {
            return bad("widths must be positive and num_labels >= 2".into());
        }
        Ok(())
    }

    /// `(sep layers, rec layers)`.
    pub fn depths(&self) -> (usize, usize) {
        if self.arch.separates() {
            let sep = self.layers / 2;
            (sep, self.layers - sep)
        } else {
            (0, self.layers)
        }
    }

    pub fn num_feature_heads(&self) -> usize {
        if self.arch.separates() {
            self.num_streams
        } else {
            0
        }
    }

    pub fn num_logit_heads(&self) -> usize {
        match self.arch {
            Arch::A1FixedSep | Arch::A2PitSep => 1,
            Arch::A3DirectPitCe | Arch::A4Joint => self.num_streams,
        }
    }

    /// Parameter count, computed without allocating the model.
    pub fn param_count(&self) -> usize {
        let (sep, rec) = self.depths();
        let h2 = 2 * self.hidden;
        let stack = |n: usize, input: usize| -> usize {
            (0..n)
                .map(|i| BidiParams::num_scalars(if i == 0 { input } else { h2 }, self.hidden))
                .sum()
        };
        stack(sep, self.feature_dim)
            + self.num_feature_heads() * LinearParams::num_scalars(h2, self.feature_dim)
            + stack(rec, self.feature_dim)
            + self.num_logit_heads() * LinearParams::num_scalars(h2, self.num_labels)
    }
}

/// Values produced by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `S` streams of `T x D`.
    pub separated_features: Option<Vec<Tensor>>,
    /// `S` streams of `T x L`.
    pub stream_logits: Option<Vec<Tensor>>,
}

/// Training objectives the model can record on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Separation MSE against the sources in reference order.
    FixedMse,
    /// Separation MSE under the best assignment.
    PitMse,
    /// Single-talker cross entropy of the recognizer on clean sources.
    CleanCe,
    /// Recognition cross entropy under the best assignment.
    PitCe,
    /// Recognition cross entropy of the joint system; with `consistent`
    /// the assignment is the one chosen by the separation objective.
    JointCe { consistent: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ArchConfig,
    pub params: ParamSet,
    sep: Vec<BidiParams>,
    feature_heads: Vec<LinearParams>,
    rec: Vec<BidiParams>,
    logit_heads: Vec<LinearParams>,
}

fn stack(
    params: &mut ParamSet,
    init: &mut Initializer,
    prefix: &str,
    n: usize,
    input: usize,
    hidden: usize,
) -> Vec<BidiParams> {
    (0..n)
        .map(|i| {
            let in_dim = if i == 0 { input } else { 2 * hidden };
            BidiParams::init(params, init, &format!("{prefix}.l{i}"), in_dim, hidden)
        })
        .collect()
}

fn run_stack(g: &mut Graph, mut x: Var, layers: &[BidiParams]) -> Result<Var> {
    for l in layers {
        x = bidi_layer(g, x, l)?;
    }
    Ok(x)
}

/// Feature matrix as a `T x D` tensor.
pub fn feature_tensor(f: &FeatureSequence) -> Result<Tensor> {
    Tensor::matrix(f.num_frames, f.dim, f.data.clone())
}

impl Model {
    /// Allocates and initializes the model; identical `(cfg, seed)` give
    /// identical parameters.
    pub fn build(cfg: ArchConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut init = Initializer::new(seed);
        let (n_sep, n_rec) = cfg.depths();
        let h2 = 2 * cfg.hidden;
        let sep = stack(&mut params, &mut init, "sep", n_sep, cfg.feature_dim, cfg.hidden);
        let feature_heads = (0..cfg.num_feature_heads())
            .map(|s| {
                LinearParams::init(&mut params, &mut init, &format!("sep.head{s}"), h2, cfg.feature_dim)
            })
            .collect();
        let rec = stack(&mut params, &mut init, "rec", n_rec, cfg.feature_dim, cfg.hidden);
        let logit_heads = (0..cfg.num_logit_heads())
            .map(|s| {
                LinearParams::init(&mut params, &mut init, &format!("rec.head{s}"), h2, cfg.num_labels)
            })
            .collect();
        let model = Model {
            cfg,
            params,
            sep,
            feature_heads,
            rec,
            logit_heads,
        };
        debug_assert_eq!(model.params.num_scalars(), cfg.param_count());
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Whether a parameter belongs to the separation front end.
    pub fn is_front_end(&self, id: crate::nn::ParamId) -> bool {
        self.params.name(id).starts_with("sep.")
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            arch_tag: self.cfg.arch.tag(),
            layer_count: self.cfg.layers as u32,
            params: self.params.clone(),
        }
    }

    /// Rebuilds a model from a checkpoint, recovering the configuration
    /// from the architecture tag and parameter shapes.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let arch = Arch::from_tag(ck.arch_tag)?;
        let shape = |name: &str| -> Result<Vec<usize>> {
            ck.params
                .find(name)
                .map(|id| ck.params.get(id).shape.clone())
                .ok_or_else(|| Error::format(format!("checkpoint lacks parameter {name}")))
        };
        let count = |prefix: &str| {
            (0..)
                .take_while(|s| ck.params.find(&format!("{prefix}{s}.w")).is_some())
                .count()
        };
        let wx = shape("rec.l0.fw.wx")?;
        let logits = shape("rec.head0.w")?;
        let num_streams = if arch.separates() {
            count("sep.head")
        } else {
            count("rec.head")
        };
        let cfg = ArchConfig {
            arch,
            num_streams,
            layers: ck.layer_count as usize,
            hidden: shape("rec.l0.fw.wh")?[0],
            feature_dim: wx[0],
            num_labels: logits[1],
        };
        let mut model = Model::build(cfg, 0)?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }

    fn check_input(&self, f: &FeatureSequence) -> Result<()> {
        if f.dim != self.cfg.feature_dim {
            return Err(Error::shape(format!(
                "model expects {}-dim features, got {}",
                self.cfg.feature_dim, f.dim
            )));
        }
        if f.num_frames == 0 {
            return Err(Error::shape("empty feature sequence"));
        }
        Ok(())
    }

    /// Separated feature streams for a mixture (separating archs only).
    pub fn separate(&self, g: &mut Graph, x: Var) -> Result<Vec<Var>> {
        if !self.cfg.arch.separates() {
            return Err(Error::invalid(format!("{} has no separation stage", self.cfg.arch)));
        }
        let h = run_stack(g, x, &self.sep)?;
        self.feature_heads.iter().map(|p| linear(g, h, p)).collect()
    }

    /// Runs one feature stream through the `rec` stack and logit head `head`.
    pub fn recognize(&self, g: &mut Graph, x: Var, head: usize) -> Result<Var> {
        let h = run_stack(g, x, &self.rec)?;
        linear(g, h, &self.logit_heads[head])
    }

    /// Per-stream logits for a mixture, as tape variables. Also returns
    /// the separated streams when the model has them.
    pub fn stream_logits(&self, g: &mut Graph, x: Var) -> Result<(Option<Vec<Var>>, Vec<Var>)> {
        match self.cfg.arch {
            Arch::A3DirectPitCe => {
                let h = run_stack(g, x, &self.rec)?;
                let logits = self.logit_heads.iter().map(|p| linear(g, h, p)).collect::<Result<_>>()?;
                Ok((None, logits))
            }
            Arch::A1FixedSep | Arch::A2PitSep | Arch::A4Joint => {
                let feats = self.separate(g, x)?;
                let shared = self.cfg.arch != Arch::A4Joint;
                let logits = feats
                    .iter()
                    .enumerate()
                    .map(|(s, &f)| self.recognize(g, f, if shared { 0 } else { s }))
                    .collect::<Result<_>>()?;
                Ok((Some(feats), logits))
            }
        }
    }

    pub fn forward(&self, mixed: &FeatureSequence) -> Result<ForwardOutput> {
        self.check_input(mixed)?;
        let mut g = Graph::new(&self.params);
        let x = g.input(feature_tensor(mixed)?)?;
        let (feats, logits) = self.stream_logits(&mut g, x)?;
        let values = |g: &Graph, vs: &[Var]| vs.iter().map(|&v| g.value(v).clone()).collect();
        Ok(ForwardOutput {
            separated_features: feats.map(|f| values(&g, &f)),
            stream_logits: Some(values(&g, &logits)),
        })
    }

    fn check_sample(&self, sample: &MixtureSample) -> Result<()> {
        self.check_input(&sample.mixed_features)?;
        if sample.num_sources() != self.cfg.num_streams {
            return Err(Error::invalid(format!(
                "{}-stream model given a {}-source sample",
                self.cfg.num_streams,
                sample.num_sources()
            )));
        }
        if sample.num_labels > self.cfg.num_labels {
            return Err(Error::invalid(format!(
                "sample uses {} labels, model predicts {}",
                sample.num_labels, self.cfg.num_labels
            )));
        }
        Ok(())
    }

    /// The objective each architecture is trained with, stage by stage.
    pub fn objectives(&self) -> Vec<Objective> {
        match self.cfg.arch {
            Arch::A1FixedSep => vec![Objective::CleanCe, Objective::FixedMse],
            Arch::A2PitSep => vec![Objective::CleanCe, Objective::PitMse],
            Arch::A3DirectPitCe => vec![Objective::PitCe],
            Arch::A4Joint => vec![Objective::PitMse, Objective::JointCe { consistent: false }],
        }
    }

    fn supports(&self, objective: Objective) -> bool {
        match objective {
            Objective::FixedMse | Objective::PitMse => self.cfg.arch.separates(),
            Objective::CleanCe => matches!(self.cfg.arch, Arch::A1FixedSep | Arch::A2PitSep),
            Objective::PitCe => self.cfg.arch == Arch::A3DirectPitCe,
            Objective::JointCe { .. } => self.cfg.arch == Arch::A4Joint,
        }
    }

    /// Records `objective` for one sample on `g`. Returns the loss variable
    /// and, for permutation-based objectives, the assignment table.
    pub fn tape_loss(
        &self,
        g: &mut Graph,
        sample: &MixtureSample,
        objective: Objective,
    ) -> Result<(Var, Option<PitResult>)> {
        self.check_sample(sample)?;
        if !self.supports(objective) {
            return Err(Error::invalid(format!(
                "{} cannot be trained with {objective:?}",
                self.cfg.arch
            )));
        }
        let s = sample.num_sources();
        let labels: Vec<Rc<[usize]>> = sample.source_labels.iter().map(|l| Rc::from(&l[..])).collect();
        if objective == Objective::CleanCe {
            let mut terms = Vec::with_capacity(s);
            for (f, l) in sample.source_features.iter().zip(&labels) {
                let x = g.input(feature_tensor(f)?)?;
                let logits = self.recognize(g, x, 0)?;
                terms.push(g.softmax_ce_sum(logits, l.clone(), None)?);
            }
            let total = g.sum(&terms)?;
            return Ok((g.scale(total, 1.0 / s as f64)?, None));
        }
        let x = g.input(feature_tensor(&sample.mixed_features)?)?;
        let source_vars = |g: &mut Graph| -> Result<Vec<Var>> {
            sample
                .source_features
                .iter()
                .map(|f| g.input(feature_tensor(f)?))
                .collect()
        };
        let (loss, result) = match objective {
            Objective::FixedMse | Objective::PitMse => {
                let outs = self.separate(g, x)?;
                let tgts = source_vars(g)?;
                if objective == Objective::FixedMse {
                    pit::fixed_mse_loss(g, &outs, &tgts)?
                } else {
                    pit::pit_mse_loss(g, &outs, &tgts)?
                }
            }
            Objective::PitCe => {
                let (_, logits) = self.stream_logits(g, x)?;
                pit::pit_ce_loss(g, &logits, &labels, None, None)?
            }
            Objective::JointCe { consistent } => {
                let (feats, logits) = self.stream_logits(g, x)?;
                let forced = if consistent {
                    let outs: Vec<Tensor> =
                        feats.unwrap().iter().map(|&v| g.value(v).clone()).collect();
                    let tgts = sample
                        .source_features
                        .iter()
                        .map(feature_tensor)
                        .collect::<Result<Vec<_>>>()?;
                    Some(pit::pit_mse(&outs, &tgts)?.best.perm)
                } else {
                    None
                };
                pit::pit_ce_loss(g, &logits, &labels, None, forced.as_deref())?
            }
            Objective::CleanCe => unreachable!(),
        };
        Ok((loss, Some(result)))
    }

    /// Value of `objective` on one sample without keeping the tape.
    pub fn objective_value(
        &self,
        sample: &MixtureSample,
        objective: Objective,
    ) -> Result<(f64, Option<PitResult>)> {
        let mut g = Graph::new(&self.params);
        let (v, r) = self.tape_loss(&mut g, sample, objective)?;
        Ok((g.value(v).item(), r))
    }
}

/// Architecture loss on precomputed outputs.
///
/// A1 and A2 score the separated features against `source_features`; A3
/// and A4 score logits against `source_labels`. A4 returns both objectives
/// (separation first) and reports the recognition objective as its value.
pub fn loss(
    output: &ForwardOutput,
    sample: &MixtureSample,
    cfg: &ArchConfig,
) -> Result<(f64, Vec<PitResult>)> {
    let feats = || {
        output
            .separated_features
            .as_deref()
            .ok_or_else(|| Error::invalid("output lacks separated features"))
    };
    let logits = || {
        output
            .stream_logits
            .as_deref()
            .ok_or_else(|| Error::invalid("output lacks stream logits"))
    };
    let targets = || -> Result<Vec<Tensor>> { sample.source_features.iter().map(feature_tensor).collect() };
    match cfg.arch {
        Arch::A1FixedSep => {
            let t = targets()?;
            let cost = pit::mse_costs(feats()?, &t)?;
            let identity: Vec<usize> = (0..t.len()).collect();
            let r = pit::force(pit::select(&cost, pit::Criterion::Mse)?, &identity)?;
            Ok((r.best.loss, vec![r]))
        }
        Arch::A2PitSep => {
            let r = pit::pit_mse(feats()?, &targets()?)?;
            Ok((r.best.loss, vec![r]))
        }
        Arch::A3DirectPitCe => {
            let r = pit::pit_ce(logits()?, &sample.source_labels)?;
            Ok((r.best.loss, vec![r]))
        }
        Arch::A4Joint => {
            let (j1, j2) = pit::joint_objectives(feats()?, &targets()?, logits()?, &sample.source_labels, false)?;
            Ok((j2.best.loss, vec![j1, j2]))
        }
    }
}

/// Per-frame argmax labels; ties resolve to the lowest label.
pub fn frame_labels(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|t| {
            let row = logits.row(t);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Collapses runs of equal labels, then removes silence.
pub fn collapse(frames: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &y in frames {
        if prev != Some(y) && y != SILENCE {
            out.push(y);
        }
        prev = Some(y);
    }
    out
}

/// Unit sequence per stream: argmax, collapse runs, drop silence.
pub fn decode_streams(output: &ForwardOutput) -> Result<Vec<Vec<usize>>> {
    let logits = output
        .stream_logits
        .as_ref()
        .ok_or_else(|| Error::invalid("decoding needs stream logits"))?;
    Ok(logits.iter().map(|l| collapse(&frame_labels(l))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(arch: Arch) -> ArchConfig {
        ArchConfig {
            hidden: 4,
            feature_dim: 3,
            num_labels: 5,
            ..ArchConfig::desk(arch)
        }
    }

    fn random_features(t: usize, d: usize, seed: u64) -> FeatureSequence {
        let mut init = Initializer::new(seed);
        let data = init.uniform(&[t * d]).data.iter().map(|v| v * 20.0).collect();
        FeatureSequence::new(data, t, d, 0.01).unwrap()
    }

    fn heads(m: &Model) -> (usize, usize) {
        let count = |p: &str| m.params.iter().filter(|(n, _)| n.starts_with(p) && n.ends_with(".w")).count();
        (count("sep.head"), count("rec.head"))
    }

    #[test]
    fn head_counts() {
        assert_eq!(heads(&Model::build(cfg(Arch::A3DirectPitCe), 1).unwrap()), (0, 2));
        assert_eq!(heads(&Model::build(cfg(Arch::A4Joint), 1).unwrap()), (2, 2));
        assert_eq!(heads(&Model::build(cfg(Arch::A2PitSep), 1).unwrap()), (2, 1));
    }

    #[test]
    fn build_is_deterministic_and_counts_match() {
        for arch in Arch::ALL {
            let a = Model::build(cfg(arch), 5).unwrap();
            let b = Model::build(cfg(arch), 5).unwrap();
            assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
            assert_eq!(a.param_count(), cfg(arch).param_count());
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(Arch::A2PitSep);
        c.layers = 1;
        assert!(Model::build(c, 0).is_err());
        c.arch = Arch::A3DirectPitCe;
        assert!(Model::build(c, 0).is_ok());
        c.num_streams = 1;
        assert!(Model::build(c, 0).is_err());
        c.num_streams = 2;
        c.hidden = 0;
        assert!(Model::build(c, 0).is_err());
    }

    #[test]
    fn single_frame_shapes() {
        for arch in Arch::ALL {
            let m = Model::build(cfg(arch), 2).unwrap();
            let out = m.forward(&random_features(1, 3, 0)).unwrap();
            for l in out.stream_logits.as_ref().unwrap() {
                assert_eq!(l.shape, vec![1, 5]);
            }
            if let Some(f) = &out.separated_features {
                assert_eq!(f.len(), 2);
                assert_eq!(f[0].shape, vec![1, 3]);
            }
            assert!(m.forward(&random_features(2, 4, 0)).is_err());
        }
    }

    #[test]
    fn heads_differ_at_init() {
        let m = Model::build(cfg(Arch::A3DirectPitCe), 3).unwrap();
        let out = m.forward(&random_features(4, 3, 1)).unwrap();
        let l = out.stream_logits.unwrap();
        assert_ne!(l[0], l[1]);
    }

    #[test]
    fn checkpoint_round_trip_recovers_config() {
        for arch in Arch::ALL {
            let m = Model::build(cfg(arch), 7).unwrap();
            let back = Model::from_checkpoint(&m.to_checkpoint()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[0, 3, 3, 0, 5]), vec![3, 5]);
        assert_eq!(collapse(&[0, 0, 0]), Vec::<usize>::new());
        assert_eq!(collapse(&[2, 0, 2]), vec![2, 2]);
        let logits = Tensor::matrix(2, 3, vec![0.0, 1.0, 1.0, 5.0, 0.0, 0.0]).unwrap();
        assert_eq!(frame_labels(&logits), vec![1, 0]);
    }

    #[test]
    fn arch_names_parse() {
        assert_eq!("a3".parse::<Arch>().unwrap(), Arch::A3DirectPitCe);
        assert_eq!("a2_pit_sep".parse::<Arch>().unwrap(), Arch::A2PitSep);
        assert!("a9".parse::<Arch>().is_err());
        for a in Arch::ALL {
            assert_eq!(Arch::from_tag(a.tag()).unwrap(), a);
        }
    }
}
