//! Toolkit configuration file.
//!
//! A config is TOML. The optional top-level `preset` (`"desk"` or `"paper"`)
//! selects the defaults; every other key overrides them and unknown keys are
//! rejected. Example:
//!
//! ```toml
//! preset = "desk"
//! seed = 7
//!
//! [corpus]
//! snr_grid = [0.0]
//!
//! [model]
//! arch = "a3_direct_pit_ce"
//!
//! [train]
//! max_epochs = 10
//! ```
//!
//! Dotted-key overrides (`train.lr=0.05`) are applied after the file and
//! before the `PITMIX_SEED` environment variable.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::corpus::dataset::CorpusConfig;
use crate::dsp::FbankConfig;
use crate::error::{Error, Result};
use crate::models::{Arch, ArchConfig};
use crate::train::TrainConfig;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "PITMIX_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

/// Network shape; input width and label count come from `fbank` and `corpus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Total recurrent depth.
    pub layers: usize,
    pub hidden: usize,
    /// Output streams; 0 means one per mixed source.
    pub num_streams: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_dir: "data".into(),
            run_dir: "run".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub preset: Preset,
    pub seed: u64,
    pub fbank: FbankConfig,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: PathsConfig,
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        ToolkitConfig::preset(Preset::Desk)
    }
}

fn config_err(e: impl fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Recursively overlays `over` onto `base`; tables merge, other values replace.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(text: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

impl ToolkitConfig {
    pub fn preset(preset: Preset) -> Self {
        let arch = Arch::A3DirectPitCe;
        let (fbank_mels, shape, train) = match preset {
            Preset::Desk => (16, ArchConfig::desk(arch), TrainConfig::desk()),
            Preset::Paper => (40, ArchConfig::paper(arch), TrainConfig::paper()),
        };
        ToolkitConfig {
            preset,
            seed: 1,
            fbank: FbankConfig {
                n_mels: fbank_mels,
                ..FbankConfig::default()
            },
            corpus: CorpusConfig::default(),
            model: ModelConfig {
                arch,
                layers: shape.layers,
                hidden: shape.hidden,
                num_streams: 0,
            },
            train,
            paths: PathsConfig::default(),
        }
    }

    /// Parses `text` over its preset's defaults, then applies `overrides`.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut user: Table = toml::from_str(text).map_err(config_err)?;
        for (key, value) in overrides {
            set_dotted(&mut user, key, parse_value(value))?;
        }
        let preset = match user.get("preset") {
            None => Preset::Desk,
            Some(Value::String(s)) => s.parse()?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut base = Table::try_from(ToolkitConfig::preset(preset)).map_err(config_err)?;
        merge(&mut base, user);
        let cfg: ToolkitConfig = base.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        ToolkitConfig::from_toml_with(text, &[])
    }

    pub fn load(path: &Path) -> Result<Self> {
        ToolkitConfig::load_with(Some(path), &[])
    }

    /// Loads `path` (or the desk preset when `None`) with overrides.
    pub fn load_with(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        ToolkitConfig::from_toml_with(&text, overrides)
    }

    /// Replaces the seed with `PITMIX_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                self.seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not a u64")))?;
                Ok(())
            }
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fbank.validate()?;
        self.corpus.validate()?;
        self.arch_config().validate()?;
        self.train.validate()
    }

    pub fn arch_config(&self) -> ArchConfig {
        ArchConfig {
            arch: self.model.arch,
            num_streams: match self.model.num_streams {
                0 => self.corpus.num_sources,
                s => s,
            },
            layers: self.model.layers,
            hidden: self.model.hidden,
            feature_dim: self.fbank.n_mels,
            num_labels: self.corpus.num_labels,
        }
    }

    /// Training config carrying the toolkit seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override {key:?} descends into a value"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))
}
