//! Training loops, stage schedules, logging, and resumable checkpoints.
//!
//! Every architecture trains as a sequence of stages, each with one
//! objective and one trainable parameter group:
//!
//! | arch | stages |
//! |------|--------|
//! | A1 | `recognizer` (clean CE, `rec.*`), `separation` (fixed MSE, `sep.*`) |
//! | A2 | `recognizer` (clean CE, `rec.*`), `separation` (PIT-MSE, `sep.*`) |
//! | A3 | `direct` (PIT-CE, all) |
//! | A4 | `front_end` (PIT-MSE, `sep.*`), `back_end` (PIT-CE, `rec.*`), `joint` (PIT-CE, all, reduced lr) |
//!
//! Within a stage the learning rate follows a reject-and-halve schedule: an
//! epoch whose validation loss exceeds the best so far is rolled back and
//! the rate is multiplied by `lr_decay`. The parameters at the end of each
//! epoch are therefore always the best seen in the stage.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{derive_seed, MixtureSample};
use crate::error::{Error, Result};
use crate::models::{Arch, Model, Objective};
use crate::nn::{sgd_step, Checkpoint, ClipMode, Graph, ParamGrads};
use crate::pit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub minibatch_utts: usize,
    pub lr: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    /// Epochs of the main stage (separation for A1/A2, direct for A3).
    pub max_epochs: usize,
    /// Epochs of the clean single-talker recognizer stage of A1/A2.
    pub recognizer_epochs: usize,
    /// Rate multiplier applied after a rejected epoch.
    pub lr_decay: f64,
    /// A4 epochs for the front-end, back-end, and joint phases.
    pub phase_epochs: [usize; 3],
    /// A4 joint-phase rate relative to `lr`; below 1.
    pub joint_lr_multiplier: f64,
    /// A4 recognition loss uses the separation stage's assignment.
    pub joint_consistent: bool,
    /// Shuffle seed; set from the toolkit seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            minibatch_utts: 8,
            lr: 0.1,
            clip: 0.1,
            clip_mode: ClipMode::Elementwise,
            max_epochs: 25,
            recognizer_epochs: 25,
            lr_decay: 0.5,
            phase_epochs: [10, 10, 5],
            joint_lr_multiplier: 0.1,
            joint_consistent: false,
            seed: 0,
        }
    }

    pub fn paper() -> Self {
        TrainConfig {
            clip: 0.0003,
            ..TrainConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.minibatch_utts == 0 {
            return bad("minibatch_utts must be >= 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.joint_lr_multiplier > 0.0 && self.joint_lr_multiplier < 1.0) {
            return bad("joint_lr_multiplier must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Recognizer,
    Separation,
    Direct,
    FrontEnd,
    BackEnd,
    Joint,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Recognizer => "recognizer",
            Phase::Separation => "separation",
            Phase::Direct => "direct",
            Phase::FrontEnd => "front_end",
            Phase::BackEnd => "back_end",
            Phase::Joint => "joint",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        [
            Phase::Recognizer,
            Phase::Separation,
            Phase::Direct,
            Phase::FrontEnd,
            Phase::BackEnd,
            Phase::Joint,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::format(format!("unknown phase {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    All,
    FrontEnd,
    BackEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub phase: Phase,
    pub objective: Objective,
    pub trainable: Trainable,
    pub epochs: usize,
    pub lr: f64,
}

/// Stage list for an architecture.
pub fn schedule(arch: Arch, cfg: &TrainConfig) -> Vec<Stage> {
    let stage = |phase, objective, trainable, epochs, lr| Stage {
        phase,
        objective,
        trainable,
        epochs,
        lr,
    };
    let recognizer = stage(Phase::Recognizer, Objective::CleanCe, Trainable::BackEnd, cfg.recognizer_epochs, cfg.lr);
    match arch {
        Arch::A1FixedSep => vec![
            recognizer,
            stage(Phase::Separation, Objective::FixedMse, Trainable::FrontEnd, cfg.max_epochs, cfg.lr),
        ],
        Arch::A2PitSep => vec![
            recognizer,
            stage(Phase::Separation, Objective::PitMse, Trainable::FrontEnd, cfg.max_epochs, cfg.lr),
        ],
        Arch::A3DirectPitCe => vec![stage(Phase::Direct, Objective::PitCe, Trainable::All, cfg.max_epochs, cfg.lr)],
        Arch::A4Joint => {
            let joint = Objective::JointCe {
                consistent: cfg.joint_consistent,
            };
            let [e1, e2, e3] = cfg.phase_epochs;
            vec![
                stage(Phase::FrontEnd, Objective::PitMse, Trainable::FrontEnd, e1, cfg.lr),
                stage(Phase::BackEnd, joint, Trainable::BackEnd, e2, cfg.lr),
                stage(Phase::Joint, joint, Trainable::All, e3, cfg.lr * cfg.joint_lr_multiplier),
            ]
        }
    }
}

fn trainable_mask(model: &Model, which: Trainable) -> Vec<bool> {
    model
        .params
        .ids()
        .map(|id| match which {
            Trainable::All => true,
            Trainable::FrontEnd => model.is_front_end(id),
            Trainable::BackEnd => !model.is_front_end(id),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub perm_switch_rate: f64,
    pub seconds: f64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,phase,train_loss,valid_loss,perm_switch_rate,seconds";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRAIN_LOG_HEADER}\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                r.epoch,
                r.phase.name(),
                r.train_loss,
                r.valid_loss,
                r.perm_switch_rate,
                r.seconds
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(TRAIN_LOG_HEADER) {
            return Err(Error::format("train log header mismatch"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::format(format!("bad number {s:?} in train log")))
        };
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 6 {
                    return Err(Error::format("train log row needs 6 fields"));
                }
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| Error::format("bad epoch"))?,
                    phase: Phase::parse(f[1])?,
                    train_loss: num(f[2])?,
                    valid_loss: num(f[3])?,
                    perm_switch_rate: num(f[4])?,
                    seconds: num(f[5])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainLog { records })
    }

    /// Equality ignoring wall time.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                EpochRecord { seconds: 0.0, ..a.clone() } == EpochRecord { seconds: 0.0, ..b.clone() }
            })
    }

    pub fn last_in(&self, phase: Phase) -> Option<&EpochRecord> {
        self.records.iter().rev().find(|r| r.phase == phase)
    }
}

/// Aggregates of one training pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Mean per-utterance loss, each measured before its batch's update.
    pub train_loss: f64,
    /// Best assignment per utterance, indexed like the dataset.
    pub perms: Vec<Option<Vec<usize>>>,
}

/// One pass over `data` in minibatches of `cfg.minibatch_utts` utterances.
///
/// Gradients are summed over a batch, clipped, and applied once. The order
/// is a shuffle seeded by `(cfg.seed, epoch)`.
pub fn train_epoch(
    model: &mut Model,
    data: &[MixtureSample],
    stage: &Stage,
    lr: f64,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mask = trainable_mask(model, stage.trainable);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64])));
    let mut perms = vec![None; data.len()];
    let mut total = 0.0;
    for batch in order.chunks(cfg.minibatch_utts) {
        let mut grads = ParamGrads::zeros_like(&model.params);
        for &i in batch {
            let mut g = Graph::new(&model.params);
            let diag = |e: Error| match e {
                Error::NonFinite(m) => Error::NonFinite(format!(
                    "epoch {epoch}, {} utterance {i} (speakers {:?}): {m}",
                    stage.phase.name(),
                    data[i].speaker_ids
                )),
                other => other,
            };
            let (loss, result) = model.tape_loss(&mut g, &data[i], stage.objective).map_err(diag)?;
            total += g.value(loss).item();
            grads.accumulate(&g.backward(loss).map_err(diag)?);
            perms[i] = result.map(|r| r.best.perm);
        }
        sgd_step(&mut model.params, &grads, lr, cfg.clip, cfg.clip_mode, |id| mask[id.0])?;
    }
    Ok(EpochStats {
        train_loss: total / data.len() as f64,
        perms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub mean_loss: f64,
    pub perms: Vec<Option<Vec<usize>>>,
    /// Count per assignment, in lexicographic permutation order.
    pub perm_histogram: Vec<usize>,
}

/// Mean objective over `data`; never mutates the model.
pub fn evaluate(model: &Model, data: &[MixtureSample], objective: Objective) -> Result<EvalStats> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let all = pit::permutations(model.cfg.num_streams)?;
    let mut histogram = vec![0; all.len()];
    let mut perms = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for s in data {
        let (v, r) = model.objective_value(s, objective)?;
        total += v;
        if let Some(r) = &r {
            histogram[r.best_index()] += 1;
        }
        perms.push(r.map(|r| r.best.perm));
    }
    Ok(EvalStats {
        mean_loss: total / data.len() as f64,
        perms,
        perm_histogram: histogram,
    })
}

fn switch_rate(prev: &[Option<Vec<usize>>], now: &[Option<Vec<usize>>]) -> f64 {
    if prev.len() != now.len() || now.is_empty() {
        return 0.0;
    }
    let changed = prev.iter().zip(now).filter(|(a, b)| a.is_some() && a != b).count();
    changed as f64 / now.len() as f64
}

/// Resumable position in the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainState {
    stage: usize,
    stage_epoch: usize,
    global_epoch: usize,
    stage_started: bool,
    lr: f64,
    best_valid: f64,
    prev_perms: Vec<Vec<usize>>,
    log: TrainLog,
}

/// Resume state; embeds the log, so it carries wall-clock seconds too.
pub const STATE_FILE: &str = "state.toml";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.csv";

pub fn epoch_checkpoint(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: TrainLog,
    /// False when `epoch_budget` ran out before the schedule did.
    pub finished: bool,
}

/// Runs the architecture's full schedule.
///
/// With `out_dir`, a checkpoint and resume state are written after every
/// epoch and an existing state there is resumed from. `epoch_budget` caps
/// the number of epochs run by this call.
pub fn train(
    model: &mut Model,
    train_set: &[MixtureSample],
    valid_set: &[MixtureSample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    epoch_budget: Option<usize>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for s in train_set.iter().chain(valid_set) {
        if s.num_sources() != model.cfg.num_streams {
            return Err(Error::invalid(format!(
                "{}-stream model given {}-source data",
                model.cfg.num_streams,
                s.num_sources()
            )));
        }
    }
    let stages = schedule(model.cfg.arch, cfg);
    let mut state = TrainState {
        stage: 0,
        stage_epoch: 0,
        global_epoch: 0,
        stage_started: false,
        lr: cfg.lr,
        best_valid: 0.0,
        prev_perms: Vec::new(),
        log: TrainLog::default(),
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let path = dir.join(STATE_FILE);
        if path.exists() {
            state = toml::from_str(&fs::read_to_string(&path)?)
                .map_err(|e| Error::format(format!("resume state: {e}")))?;
            if state.global_epoch > 0 {
                let ck = Checkpoint::load(&epoch_checkpoint(dir, state.global_epoch))?;
                if ck.arch_tag != model.cfg.arch.tag() {
                    return Err(Error::invalid("resume checkpoint is for another architecture"));
                }
                model.params.load_from(&ck.params)?;
            }
        }
    }
    let mut best = model.params.clone();
    let mut ran = 0;
    while state.stage < stages.len() {
        let st = stages[state.stage];
        if state.stage_epoch >= st.epochs {
            state.stage += 1;
            state.stage_epoch = 0;
            state.stage_started = false;
            continue;
        }
        if epoch_budget.is_some_and(|b| ran >= b) {
            return Ok(TrainOutcome {
                log: state.log,
                finished: false,
            });
        }
        if !state.stage_started {
            state.lr = st.lr;
            state.best_valid = evaluate(model, valid_set, st.objective)?.mean_loss;
            state.prev_perms.clear();
            state.stage_started = true;
        }
        let start = Instant::now();
        state.global_epoch += 1;
        let stats = train_epoch(model, train_set, &st, state.lr, cfg, state.global_epoch)?;
        let valid = evaluate(model, valid_set, st.objective)?;
        if !stats.train_loss.is_finite() || !valid.mean_loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {} losses", state.global_epoch)));
        }
        let prev: Vec<Option<Vec<usize>>> = state.prev_perms.iter().map(|p| Some(p.clone())).collect();
        let rate = switch_rate(&prev, &stats.perms);
        state.prev_perms = stats.perms.into_iter().flatten().collect();
        if valid.mean_loss <= state.best_valid {
            state.best_valid = valid.mean_loss;
            best.clone_from(&model.params);
        } else {
            model.params.clone_from(&best);
            state.lr *= cfg.lr_decay;
        }
        state.log.records.push(EpochRecord {
            epoch: state.global_epoch,
            phase: st.phase,
            train_loss: stats.train_loss,
            valid_loss: valid.mean_loss,
            perm_switch_rate: rate,
            seconds: start.elapsed().as_secs_f64(),
        });
        state.stage_epoch += 1;
        ran += 1;
        if let Some(dir) = out_dir {
            model.to_checkpoint().save(&epoch_checkpoint(dir, state.global_epoch))?;
            fs::write(dir.join(LOG_FILE), state.log.to_csv())?;
            let text = toml::to_string(&state).map_err(|e| Error::format(e.to_string()))?;
            fs::write(dir.join(STATE_FILE), text)?;
        }
    }
    if let Some(dir) = out_dir {
        model.to_checkpoint().save(&dir.join(FINAL_CHECKPOINT))?;
        fs::write(dir.join(LOG_FILE), state.log.to_csv())?;
    }
    Ok(TrainOutcome {
        log: state.log,
        finished: true,
    })
}

/// Progressive three-phase schedule of the joint system.
pub fn train_arch4(
    model: &mut Model,
    train_set: &[MixtureSample],
    valid_set: &[MixtureSample],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if model.cfg.arch != Arch::A4Joint {
        return Err(Error::invalid(format!("train_arch4 given {}", model.cfg.arch)));
    }
    Ok(train(model, train_set, valid_set, cfg, None, None)?.log)
}
