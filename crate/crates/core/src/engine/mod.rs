//! Multi-block decoding state machine.
//!
//! The output region is split into fixed-size blocks. A block is activated
//! once its predecessor is `block_add` complete and then decodes only tokens
//! whose entropy is below the threshold; it becomes fully activated once the
//! predecessor is `fully_active` complete. The earliest fully activated block
//! is the *frontier*: if nothing there clears the threshold, its
//! lowest-entropy position is decoded anyway, so every pass makes progress.
//!
//! Finished blocks spend `cache_delay` full (uncached) passes stabilizing
//! before their cache is stored. Cached passes age every stored cache; full
//! passes, forced by a stabilizing block or by the periodic refresh
//! schedule, reset all ages.

mod ledger;
mod select;
mod session;

pub use ledger::{advance_blocks, Block, BlockLedger, BlockState, Transition};
pub use select::{select_decodes, Decode, Selection};
pub use session::{
    init_session, run, run_baseline, DecodeMetrics, DecodeOutcome, Session, StepEvents,
    TranscriptEvent,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::DenoiseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("pass {pass}: {source}")]
    Denoiser {
        pass: u64,
        #[source]
        source: DenoiseError,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("session already terminated")]
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Entropy-threshold decoding over several concurrently active blocks.
    #[serde(alias = "multi-block")]
    MultiBlock,
    /// Entropy-threshold decoding inside one block at a time.
    #[serde(alias = "single-block")]
    SingleBlock,
    /// One lowest-entropy token per pass, block by block.
    Vanilla,
}

impl std::str::FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multi-block" | "multi_block" => Ok(DecodeMode::MultiBlock),
            "single-block" | "single_block" => Ok(DecodeMode::SingleBlock),
            "vanilla" => Ok(DecodeMode::Vanilla),
            other => Err(format!("unknown decode mode `{other}`")),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::MultiBlock => "multi-block",
            DecodeMode::SingleBlock => "single-block",
            DecodeMode::Vanilla => "vanilla",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub block_size: usize,
    /// Entropy threshold in nats; decoding requires `entropy < tau`.
    pub tau: f64,
    /// Predecessor completion that activates a block.
    pub block_add: f64,
    /// Predecessor completion that fully activates a block.
    pub fully_active: f64,
    /// Full passes a finished block serves before its cache is stored.
    pub cache_delay: u32,
    /// Passes between periodic refreshes; `None` disables periodic refresh.
    pub refresh_interval: Option<u32>,
    pub max_len: usize,
    pub early_stop: bool,
    pub mode: DecodeMode,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            block_size: 32,
            tau: 0.45,
            block_add: 0.1,
            fully_active: 0.95,
            cache_delay: 1,
            refresh_interval: Some(4),
            max_len: 256,
            early_stop: true,
            mode: DecodeMode::MultiBlock,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.block_size < 1 {
            return bad("block_size must be >= 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be >= 1");
        }
        if !(0.0 < self.block_add && self.block_add <= self.fully_active && self.fully_active <= 1.0) {
            return bad("need 0 < block_add <= fully_active <= 1");
        }
        if self.cache_delay < 1 {
            return bad("cache_delay must be >= 1");
        }
        if self.refresh_interval == Some(0) {
            return bad("refresh_interval must be >= 1");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be >= 0");
        }
        Ok(())
    }
}
