//! Multi-talker separation and recognition with utterance-level
//! permutation-free training, on a synthetic corpus, with a from-scratch
//! reverse-mode differentiation core.
//!
//! Data flows `corpus` -> `dsp` features -> `models` (built on `nn`) ->
//! `train` with losses from `pit` -> `eval`. The `pitmix` binary drives the
//! pipeline through [`cli`].

pub mod cli;
pub mod config;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod models;
pub mod nn;
pub mod pit;
pub mod train;

pub use error::{Error, Result};
