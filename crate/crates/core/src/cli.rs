//! Command-line front end: `gen-data`, `train`, `eval`, `gradcheck`, `inspect`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure,
//! 3 check failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_override, ToolkitConfig};
use crate::corpus::dataset::{generate_dataset, load_split, SplitKind};
use crate::corpus::mixture::overlap_fraction;
use crate::corpus::MixtureSample;
use crate::error::{Error, Result};
use crate::eval::{cross_count_eval, score_dataset, score_predictions, ScoreReport};
use crate::gradcheck::{self, GradcheckOptions};
use crate::models::{collapse, Model};
use crate::nn::Checkpoint;
use crate::train::{train, FINAL_CHECKPOINT, LOG_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Resolved config written next to generated data.
pub const DATASET_CONFIG: &str = "dataset.toml";
/// Resolved config written into a run directory.
pub const RUN_CONFIG: &str = "run.toml";
pub const SURPLUS_HEADER: &str = "surplus_streams,mean_decoded_len";

#[derive(Debug, Parser)]
#[command(name = "pitmix", version, about = "Train and score multi-talker recognizers on synthetic mixtures")]
pub struct Cli {
    /// Worker cap; every subcommand currently runs on one thread.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/valid/test mixtures and manifests.
    GenData(GenDataArgs),
    /// Train the configured architecture, resuming when possible.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
    /// Print a sample record or checkpoint human-readably.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config; the desk preset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, e.g. `train.lr=0.05`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed; wins over the config and PITMIX_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ToolkitConfig> {
        let overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        let mut cfg = ToolkitConfig::load_with(self.config.as_deref(), &overrides)?;
        cfg.apply_env()?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory; `paths.data_dir` when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory written by gen-data; `paths.data_dir` when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory; `paths.run_dir` when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop after this many epochs; a later call resumes.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint; not needed with `--oracle`.
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Split manifest, e.g. `data/test.manifest`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report CSV path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow a model with more streams than the data has sources.
    #[arg(long)]
    pub cross_count: bool,
    /// Score the reference labels themselves.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seeded configurations per op.
    #[arg(long, default_value_t = gradcheck::DEFAULT_CONFIGS)]
    pub configs: usize,
    /// Perturb the analytic gradient of this op.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A `.manifest` or `.ckpt` file.
    pub path: PathBuf,
    /// Record index within a manifest.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn write_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))
}

/// Per-split counts by SNR plus overlap and length statistics.
pub fn dataset_summary(splits: &[(SplitKind, &[MixtureSample])]) -> String {
    let mut out = String::new();
    for (split, samples) in splits {
        let mut by_snr: BTreeMap<String, usize> = BTreeMap::new();
        for s in samples.iter() {
            *by_snr.entry(format!("{:.1}", s.snr_db)).or_default() += 1;
        }
        let overlaps: Vec<f64> = samples.iter().map(|s| overlap_fraction(&s.source_labels)).collect();
        let n = samples.len().max(1) as f64;
        let frames: usize = samples.iter().map(MixtureSample::num_frames).sum();
        let _ = writeln!(
            out,
            "{}: {} mixtures, {} sources, mean {:.1} frames",
            split.name(),
            samples.len(),
            samples.first().map_or(0, MixtureSample::num_sources),
            frames as f64 / n
        );
        let snrs: Vec<String> = by_snr.iter().map(|(k, v)| format!("{k} dB: {v}")).collect();
        let _ = writeln!(out, "  snr counts: {}", snrs.join(", "));
        let _ = writeln!(
            out,
            "  overlap: mean {:.3}, min {:.3}",
            overlaps.iter().sum::<f64>() / n,
            overlaps.iter().copied().fold(f64::INFINITY, f64::min).min(1.0)
        );
    }
    out
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<i32> {
    let cfg = a.config.resolve()?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.data_dir.clone());
    write_dir(&out)?;
    let data = generate_dataset(&cfg.corpus, &cfg.fbank, cfg.seed, &out)?;
    fs::write(out.join(DATASET_CONFIG), cfg.to_toml())?;
    let splits: Vec<(SplitKind, &[MixtureSample])> =
        data.iter().map(|(m, s)| (m.split, s.as_slice())).collect();
    print!("{}", dataset_summary(&splits));
    println!("fingerprint {}", data[0].0.fingerprint);
    Ok(EXIT_OK)
}

/// Config saved by gen-data in `dir`, if any.
fn dataset_config(dir: &Path) -> Result<Option<ToolkitConfig>> {
    let p = dir.join(DATASET_CONFIG);
    if p.exists() {
        Ok(Some(ToolkitConfig::load(&p)?))
    } else {
        Ok(None)
    }
}

fn frame_hop(dir: &Path) -> Result<f64> {
    Ok(dataset_config(dir)?.map_or(ToolkitConfig::default().fbank.frame_hop, |c| c.fbank.frame_hop))
}

pub fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let cfg = a.config.resolve()?;
    let data = a.data.clone().unwrap_or_else(|| cfg.paths.data_dir.clone());
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.run_dir.clone());
    let hop = frame_hop(&data)?;
    let (_, train_set) = load_split(&data, SplitKind::Train, hop)?;
    let (_, valid_set) = load_split(&data, SplitKind::Valid, hop)?;
    let ac = cfg.arch_config();
    for s in train_set.iter().chain(&valid_set) {
        if s.num_sources() != ac.num_streams {
            return Err(Error::Config(format!(
                "{}-stream model configured for {}-source data",
                ac.num_streams,
                s.num_sources()
            )));
        }
        if s.feature_dim() != ac.feature_dim || s.num_labels != ac.num_labels {
            return Err(Error::Config(format!(
                "data has {} features and {} labels; config expects {} and {}",
                s.feature_dim(),
                s.num_labels,
                ac.feature_dim,
                ac.num_labels
            )));
        }
    }
    write_dir(&out)?;
    let run_cfg = out.join(RUN_CONFIG);
    if run_cfg.exists() {
        let prev = ToolkitConfig::load(&run_cfg)?;
        if prev.fingerprint() != cfg.fingerprint() {
            return Err(Error::Config(format!(
                "{} holds a run with a different config",
                out.display()
            )));
        }
    } else {
        fs::write(&run_cfg, cfg.to_toml())?;
    }
    let mut model = Model::build(ac, cfg.seed)?;
    println!("{} with {} parameters", ac.arch, model.param_count());
    let outcome = train(&mut model, &train_set, &valid_set, &cfg.train_config(), Some(&out), a.budget)?;
    for r in &outcome.log.records {
        println!(
            "epoch {:>3} {:<10} train {:.4} valid {:.4} switch {:.3}",
            r.epoch,
            r.phase.name(),
            r.train_loss,
            r.valid_loss,
            r.perm_switch_rate
        );
    }
    if outcome.finished {
        println!("wrote {} and {}", out.join(FINAL_CHECKPOINT).display(), out.join(LOG_FILE).display());
    } else {
        println!("stopped after the epoch budget; rerun to resume");
    }
    Ok(EXIT_OK)
}

fn manifest_split(path: &Path) -> Result<(PathBuf, SplitKind)> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let split = SplitKind::ALL
        .into_iter()
        .find(|k| k.name() == stem && path.extension().is_some_and(|e| e == "manifest"))
        .ok_or_else(|| Error::Config(format!("{} is not a split manifest", path.display())))?;
    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((dir, split))
}

/// Sidecar path for cross-count statistics: `<out>.surplus.csv`.
pub fn surplus_path(out: &Path) -> PathBuf {
    out.with_extension("surplus.csv")
}

pub fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let (dir, split) = manifest_split(&a.manifest)?;
    let (_, samples) = load_split(&dir, split, frame_hop(&dir)?)?;
    let report: ScoreReport = if a.oracle {
        let refs: Vec<Vec<Vec<usize>>> = samples.iter().map(|s| s.source_labels.clone()).collect();
        score_predictions(&samples, &refs)?
    } else {
        let path = a.checkpoint.as_ref().expect("clap requires a checkpoint");
        let model = Model::from_checkpoint(&Checkpoint::load(path)?)?;
        let streams = model.cfg.num_streams;
        let sources = samples.first().map_or(streams, MixtureSample::num_sources);
        if samples.iter().any(|s| s.feature_dim() != model.cfg.feature_dim) {
            return Err(Error::Config("checkpoint and data feature widths differ".into()));
        }
        if sources == streams {
            score_dataset(&model, &samples)?
        } else if a.cross_count && sources < streams {
            cross_count_eval(&model, &samples)?
        } else {
            return Err(Error::Config(format!(
                "{streams}-stream checkpoint on {sources}-source data{}",
                if sources < streams { "; pass --cross-count" } else { "" }
            )));
        }
    };
    match &a.out {
        Some(out) => {
            fs::write(out, report.to_csv())?;
            if let Some(sp) = &report.surplus {
                fs::write(
                    surplus_path(out),
                    format!("{SURPLUS_HEADER}\n{},{:.6}\n", sp.streams, sp.mean_decoded_len),
                )?;
            }
            let o = report.overall();
            println!(
                "{} utterances: unit error {:.4}, frame error {:.4}",
                o.n_utts,
                o.unit_err(),
                o.frame_err()
            );
        }
        None => print!("{}", report.to_csv()),
    }
    if let Some(sp) = &report.surplus {
        println!(
            "surplus streams {}, mean decoded length {:.3}",
            sp.streams, sp.mean_decoded_len
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let checks = gradcheck::run(&GradcheckOptions {
        seed: a.seed,
        configs: a.configs,
        corrupt: a.corrupt.clone(),
    })
    .map_err(|e| match e {
        Error::InvalidInput(m) => Error::Config(m),
        e => e,
    })?;
    print!("{}", gradcheck::format_table(&checks));
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{failed} of {} ops failed", checks.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK })
}

fn labels_line(labels: &[usize]) -> String {
    labels.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Human-readable dump of one mixture.
pub fn describe_sample(s: &MixtureSample) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "frames {} | feature dim {} | labels {} | snr {:.3} dB | overlap {:.3}",
        s.num_frames(),
        s.feature_dim(),
        s.num_labels,
        s.snr_db,
        overlap_fraction(&s.source_labels)
    );
    for k in 0..s.num_sources() {
        let (mean, var) = s.source_features[k].moments();
        let m = mean.iter().sum::<f64>() / mean.len() as f64;
        let v = var.iter().sum::<f64>() / var.len() as f64;
        let _ = writeln!(
            out,
            "source {k}: speaker {} gain {:.6} feature mean {:.4} var {:.4}",
            s.speaker_ids[k], s.gains[k], m, v
        );
        let _ = writeln!(out, "  units  {}", labels_line(&collapse(&s.source_labels[k])));
        let _ = writeln!(out, "  frames {}", labels_line(&s.source_labels[k]));
    }
    out
}

fn describe_checkpoint(ck: &Checkpoint) -> Result<String> {
    let model = Model::from_checkpoint(ck)?;
    let c = model.cfg;
    let mut out = format!(
        "{} | streams {} | layers {} | hidden {} | features {} | labels {} | {} parameters\n",
        c.arch,
        c.num_streams,
        c.layers,
        c.hidden,
        c.feature_dim,
        c.num_labels,
        model.param_count()
    );
    for (name, t) in model.params.iter() {
        let _ = writeln!(out, "  {name:<16} {:?}", t.shape);
    }
    Ok(out)
}

pub fn cmd_inspect(a: &InspectArgs) -> Result<i32> {
    match a.path.extension().and_then(|e| e.to_str()) {
        Some("ckpt") => print!("{}", describe_checkpoint(&Checkpoint::load(&a.path)?)?),
        Some("manifest") => {
            let (dir, split) = manifest_split(&a.path)?;
            let (manifest, samples) = load_split(&dir, split, frame_hop(&dir)?)?;
            let s = samples.get(a.index).ok_or_else(|| {
                Error::Config(format!("index {} beyond {} records", a.index, samples.len()))
            })?;
            println!("{} record {} of {}", split.name(), a.index, samples.len());
            println!("manifest line: {}", manifest.records[a.index]);
            print!("{}", describe_sample(s));
        }
        _ => {
            return Err(Error::Config(format!(
                "{}: expected a .manifest or .ckpt file",
                a.path.display()
            )))
        }
    }
    Ok(EXIT_OK)
}
