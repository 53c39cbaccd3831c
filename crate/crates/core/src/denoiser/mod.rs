//! Prediction backends.
//!
//! A [`Denoiser`] looks at a partially decoded output through a
//! [`ContextView`] and returns one [`Prediction`] per requested masked
//! position. The decode engine only ever consumes the mode and the entropy;
//! the full support is kept so that the entropy can be audited.
//!
//! Four backends live here:
//!
//! * [`ScriptedDenoiser`]: fixed `(token, entropy)` per position, for hand
//!   traces.
//! * [`NGramDenoiser`]: bidirectional n-gram counts with back-off, giving
//!   real corpus entropies.
//! * [`OracleDenoiser`]: a seeded simulator whose accuracy degrades with
//!   missing context and stale caches.
//! * [`PolicyDenoiser`]: wraps any backend with per-offset threshold
//!   multipliers fit from distillation records.

mod ngram;
mod oracle;
mod policy;
mod scripted;

pub use ngram::{ngram_train, NGramDenoiser, NGramModelFile};
pub use oracle::{oracle_quality, OracleDenoiser, OracleParams};
pub use policy::{fit_order_policy, OrderPolicy, PolicyDenoiser};
pub use scripted::{ScriptEntry, ScriptedDenoiser, ScriptFile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequence::{Token, TokenSeq, Vocab};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiseError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("policy fit error: {0}")]
    Fit(String),
}

/// A model's belief about one masked position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// 1-based output position.
    pub position: usize,
    pub mode: Token,
    pub mode_prob: f64,
    /// Shannon entropy of `support`, in nats.
    pub entropy: f64,
    pub support: Vec<(Token, f64)>,
}

/// `-sum p ln p`, skipping zero-mass entries.
pub fn entropy_of(support: &[(Token, f64)]) -> f64 {
    -support
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| p * p.ln())
        .sum::<f64>()
}

impl Prediction {
    /// Builds a prediction whose entropy is computed from `support`.
    pub fn from_support(position: usize, mode: Token, support: Vec<(Token, f64)>) -> Self {
        let mode_prob = support
            .iter()
            .find(|(t, _)| *t == mode)
            .map(|(_, p)| *p)
            .unwrap_or(0.0);
        Prediction {
            position,
            mode,
            mode_prob,
            entropy: entropy_of(&support),
            support,
        }
    }

    /// Verifies the distributional invariants.
    pub fn check(&self, vocab: &Vocab) -> Result<(), String> {
        let total: f64 = self.support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("support sums to {total}"));
        }
        if (self.entropy - entropy_of(&self.support)).abs() > 1e-9 {
            return Err(format!(
                "entropy {} disagrees with support entropy {}",
                self.entropy,
                entropy_of(&self.support)
            ));
        }
        if self.support.iter().any(|(t, _)| *t == vocab.mask_id) {
            return Err("mask token in support".into());
        }
        let max = self.support.iter().map(|(_, p)| *p).fold(0.0, f64::max);
        if self.mode_prob + 1e-12 < max || !(self.mode_prob > 0.0) {
            return Err(format!("mode probability {} is not maximal", self.mode_prob));
        }
        Ok(())
    }
}

/// Mass `q` on `mode`, the rest spread evenly over `others`.
pub(crate) fn peaked_support(mode: Token, q: f64, others: &[Token]) -> Vec<(Token, f64)> {
    let mut support = Vec::with_capacity(others.len() + 1);
    support.push((mode, q));
    if !others.is_empty() && q < 1.0 {
        let rest = (1.0 - q) / others.len() as f64;
        support.extend(others.iter().map(|&t| (t, rest)));
    }
    support
}

/// Entropy of [`peaked_support`] with `d` alternatives.
pub(crate) fn peaked_entropy(q: f64, d: usize) -> f64 {
    let mut h = 0.0;
    if q > 0.0 {
        h -= q * q.ln();
    }
    if d > 0 && q < 1.0 {
        let r = 1.0 - q;
        h -= r * (r / d as f64).ln();
    }
    h
}

/// What a backend says about the decode threshold at a block offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdBias {
    /// Use the engine threshold unchanged.
    Neutral,
    /// Multiply the engine threshold.
    Scaled(f64),
    /// The offset lies beyond what the policy was fit on; the engine uses a
    /// multiplier of 1 and records a warning.
    OutOfRange,
}

/// Read-only view of a decoding session handed to a [`Denoiser`].
#[derive(Debug, Clone, Copy)]
pub struct ContextView<'a> {
    pub prompt: &'a [Token],
    /// The output region; MASK marks undecoded positions.
    pub output: &'a TokenSeq,
    /// Output positions are grouped into consecutive blocks of this size.
    pub block_size: usize,
    /// Cache age per block (0-based block index) for Completed blocks, `None`
    /// otherwise. Missing trailing entries mean `None`.
    pub cache_ages: &'a [Option<u32>],
    /// Ground-truth output, required by simulator backends only.
    pub target: Option<&'a [Token]>,
    pub vocab: &'a Vocab,
    /// Per-session seed.
    pub seed: u64,
}

impl<'a> ContextView<'a> {
    /// 0-based block index of a 1-based position.
    pub fn block_of(&self, pos: usize) -> usize {
        (pos - 1) / self.block_size
    }

    /// 1-based positions of block `b`.
    pub fn block_range(&self, b: usize) -> std::ops::RangeInclusive<usize> {
        let start = b * self.block_size + 1;
        let end = ((b + 1) * self.block_size).min(self.output.len());
        start..=end
    }

    pub fn cache_age(&self, b: usize) -> Option<u32> {
        self.cache_ages.get(b).copied().flatten()
    }

    pub fn is_revealed(&self, pos: usize) -> bool {
        !self.output.is_masked(pos, self.vocab)
    }

    /// Fails unless every requested position exists and is masked.
    pub fn check_requested(&self, positions: &[usize]) -> Result<(), DenoiseError> {
        for &p in positions {
            if p == 0 || p > self.output.len() {
                return Err(DenoiseError::Contract(format!(
                    "position {p} outside output 1..={}",
                    self.output.len()
                )));
            }
            if self.is_revealed(p) {
                return Err(DenoiseError::Contract(format!(
                    "position {p} is already unmasked"
                )));
            }
        }
        Ok(())
    }
}

/// The prediction contract shared by every backend.
///
/// Implementations are immutable after construction; any randomness must be
/// derived from [`ContextView::seed`].
pub trait Denoiser: Send + Sync {
    fn predict(
        &self,
        view: &ContextView<'_>,
        positions: &[usize],
    ) -> Result<Vec<Prediction>, DenoiseError>;

    /// Threshold adjustment for a 1-based offset within a block.
    fn threshold_bias(&self, _offset: usize) -> ThresholdBias {
        ThresholdBias::Neutral
    }

    /// Window length a wrapped policy was fit on, if any.
    fn policy_k_max(&self) -> Option<usize> {
        None
    }

    fn describe(&self) -> String;
}
