//! Token sequences, teacher trajectories and pseudo-trajectory distillation
//! records.
//!
//! Positions are 1-based everywhere in this module's public surface. A
//! [`Trajectory`] stores the order in which a teacher unmasked the output
//! positions; the state after `i` steps reveals exactly `order[..i]`.
//!
//! A distillation record freezes one intermediate teacher state inside a
//! window `s+1 ..= s+k`:
//!
//! * positions `<= s` carry the ground truth,
//! * positions `> s + k` are masked,
//! * window positions are revealed iff the teacher had unmasked them after
//!   `s + ceil(k * t)` steps.
//!
//! The rules are applied in that priority order, so the tail stays masked even
//! where the teacher had already decoded it.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::{ContextView, DenoiseError, Denoiser};

pub type Token = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("step {step} out of range 0..={n}")]
    InvalidStep { step: usize, n: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("progress {0} outside [0, 1]")]
    InvalidProgress(f64),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("teacher pass {pass}: {source}")]
    Teacher {
        pass: usize,
        #[source]
        source: DenoiseError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub size: u32,
    pub mask_id: Token,
    pub eos_id: Token,
}

impl Vocab {
    pub fn new(size: u32, mask_id: Token, eos_id: Token) -> Result<Self, SequenceError> {
        let v = Vocab {
            size,
            mask_id,
            eos_id,
        };
        v.validate()?;
        Ok(v)
    }

    /// Conventional layout: ordinary tokens `0..size-2`, then EOS, then MASK.
    pub fn with_size(size: u32) -> Result<Self, SequenceError> {
        if size < 4 {
            return Err(SequenceError::InvalidVocab(format!("size {size} < 4")));
        }
        Vocab::new(size, size - 1, size - 2)
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.size < 4 {
            return Err(SequenceError::InvalidVocab(format!("size {} < 4", self.size)));
        }
        if self.mask_id == self.eos_id {
            return Err(SequenceError::InvalidVocab("mask_id equals eos_id".into()));
        }
        if self.mask_id >= self.size || self.eos_id >= self.size {
            return Err(SequenceError::InvalidVocab(
                "mask_id and eos_id must be < size".into(),
            ));
        }
        Ok(())
    }

    /// Tokens a model may emit: everything except MASK.
    pub fn emittable(&self) -> impl Iterator<Item = Token> + '_ {
        (0..self.size).filter(move |&t| t != self.mask_id)
    }

    /// Ordinary content tokens: neither MASK nor EOS.
    pub fn content(&self) -> impl Iterator<Item = Token> + '_ {
        (0..self.size).filter(move |&t| t != self.mask_id && t != self.eos_id)
    }
}

/// A fixed-length run of tokens, some of which may be MASK.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<Token>);

impl TokenSeq {
    pub fn new(tokens: Vec<Token>) -> Self {
        TokenSeq(tokens)
    }

    pub fn masked(n: usize, vocab: &Vocab) -> Self {
        TokenSeq(vec![vocab.mask_id; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based access.
    pub fn get(&self, pos: usize) -> Option<Token> {
        pos.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    /// 1-based write. Panics when `pos` is out of range.
    pub fn set(&mut self, pos: usize, token: Token) {
        self.0[pos - 1] = token;
    }

    pub fn is_masked(&self, pos: usize, vocab: &Vocab) -> bool {
        self.get(pos) == Some(vocab.mask_id)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }

    pub fn masked_positions<'a>(&'a self, vocab: &'a Vocab) -> impl Iterator<Item = usize> + 'a {
        self.0
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t == vocab.mask_id)
            .map(|(i, _)| i + 1)
    }
}

impl From<Vec<Token>> for TokenSeq {
    fn from(v: Vec<Token>) -> Self {
        TokenSeq(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `order[j]` is the 1-based position unmasked at step `j + 1`.
    pub order: Vec<usize>,
    pub truth: TokenSeq,
}

/// Checks that `order` is a permutation of `1..=n` and `truth` is fully
/// unmasked. The error names the first violation found.
pub fn validate_trajectory(traj: &Trajectory, n: usize, vocab: &Vocab) -> Result<(), String> {
    if traj.order.len() != n {
        return Err(format!("order has length {}, expected {n}", traj.order.len()));
    }
    let mut seen = vec![false; n];
    for &p in &traj.order {
        if p == 0 || p > n {
            return Err(format!("position {p} out of range 1..={n}"));
        }
        if seen[p - 1] {
            return Err(format!("duplicate position {p}"));
        }
        seen[p - 1] = true;
    }
    if traj.truth.len() != n {
        return Err(format!("truth has length {}, expected {n}", traj.truth.len()));
    }
    if let Some(p) = traj.truth.masked_positions(vocab).next() {
        return Err(format!("truth is masked at position {p}"));
    }
    Ok(())
}

/// Positions revealed after `step` teacher steps.
pub fn unmasked_set(traj: &Trajectory, step: usize) -> Result<BTreeSet<usize>, SequenceError> {
    let n = traj.order.len();
    if step > n {
        return Err(SequenceError::InvalidStep { step, n });
    }
    Ok(traj.order[..step].iter().copied().collect())
}

/// Replays a teacher that unmasks exactly one token per pass: the masked
/// position with the lowest predictive entropy, lowest position on ties.
/// EOS does not stop the teacher; all `n` positions get decoded.
pub fn record_teacher_trajectory(
    denoiser: &dyn Denoiser,
    prompt: &[Token],
    n: usize,
    seed: u64,
    target: Option<&[Token]>,
    vocab: &Vocab,
) -> Result<Trajectory, SequenceError> {
    if n == 0 {
        return Err(SequenceError::InvalidWindow("output length must be >= 1".into()));
    }
    let mut out = TokenSeq::masked(n, vocab);
    let mut order = Vec::with_capacity(n);
    for pass in 1..=n {
        let masked: Vec<usize> = out.masked_positions(vocab).collect();
        let view = ContextView {
            prompt,
            output: &out,
            block_size: n,
            cache_ages: &[],
            target,
            vocab,
            seed,
        };
        let preds = denoiser
            .predict(&view, &masked)
            .map_err(|source| SequenceError::Teacher { pass, source })?;
        let best = preds
            .iter()
            .min_by(|a, b| a.entropy.total_cmp(&b.entropy).then(a.position.cmp(&b.position)))
            .ok_or(SequenceError::Teacher {
                pass,
                source: DenoiseError::Contract("no predictions returned".into()),
            })?;
        out.set(best.position, best.mode);
        order.push(best.position);
    }
    Ok(Trajectory { order, truth: out })
}

/// Window and reveal parameters for one distillation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Length of the fully revealed prefix.
    pub s: usize,
    /// Window length; the window is `s+1 ..= s+k`.
    pub k: usize,
    /// Fraction of the window's teacher steps replayed.
    pub t: f64,
}

impl NoiseSpec {
    pub fn validate(&self, n: usize) -> Result<(), SequenceError> {
        if self.k == 0 {
            return Err(SequenceError::InvalidWindow("k must be >= 1".into()));
        }
        if self.s + self.k > n {
            return Err(SequenceError::InvalidWindow(format!(
                "s + k = {} exceeds length {n}",
                self.s + self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.t) {
            return Err(SequenceError::InvalidWindow(format!("t = {} outside [0, 1]", self.t)));
        }
        Ok(())
    }

    /// Number of teacher steps replayed: `s + ceil(k * t)`.
    pub fn replay_steps(&self) -> usize {
        // 1e-9 absorbs products like 10 * 0.7 = 7.000000000000001.
        self.s + ((self.k as f64 * self.t) - 1e-9).ceil().max(0.0) as usize
    }

    pub fn window(&self) -> std::ops::RangeInclusive<usize> {
        self.s + 1..=self.s + self.k
    }
}

/// Builds the noisy input and the supervised (masked window) positions.
pub fn build_noisy_sequence(
    truth: &TokenSeq,
    traj: &Trajectory,
    spec: &NoiseSpec,
    vocab: &Vocab,
) -> Result<(TokenSeq, Vec<usize>), SequenceError> {
    let n = truth.len();
    spec.validate(n)?;
    if traj.order.len() != n {
        return Err(SequenceError::Alignment(format!(
            "trajectory covers {} positions, truth has {n}",
            traj.order.len()
        )));
    }
    let revealed = unmasked_set(traj, spec.replay_steps().min(n))?;
    let mut noisy = TokenSeq::masked(n, vocab);
    let mut labels = Vec::new();
    for pos in 1..=n {
        if pos <= spec.s {
            noisy.set(pos, truth.tokens()[pos - 1]);
        } else if pos > spec.s + spec.k {
            // stays masked
        } else if revealed.contains(&pos) {
            noisy.set(pos, truth.tokens()[pos - 1]);
        } else {
            labels.push(pos);
        }
    }
    Ok((noisy, labels))
}

fn check_progress(progress: f64) -> Result<(), SequenceError> {
    if (0.0..=1.0).contains(&progress) {
        Ok(())
    } else {
        Err(SequenceError::InvalidProgress(progress))
    }
}

/// Linear noise curriculum from `t_start` to `t_end`.
pub fn curriculum_noise(progress: f64, t_start: f64, t_end: f64) -> Result<f64, SequenceError> {
    check_progress(progress)?;
    if !(0.0 <= t_start && t_start <= t_end && t_end <= 1.0) {
        return Err(SequenceError::InvalidSchedule(format!(
            "need 0 <= t_start <= t_end <= 1, got ({t_start}, {t_end})"
        )));
    }
    Ok(t_start + progress * (t_end - t_start))
}

/// Linear window-length curriculum, rounded to the nearest integer.
pub fn curriculum_window(progress: f64, k_start: usize, k_end: usize) -> Result<usize, SequenceError> {
    check_progress(progress)?;
    if !(1 <= k_start && k_start <= k_end) {
        return Err(SequenceError::InvalidSchedule(format!(
            "need 1 <= k_start <= k_end, got ({k_start}, {k_end})"
        )));
    }
    Ok((k_start as f64 + progress * (k_end - k_start) as f64).round() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_start: f64,
    pub t_end: f64,
    pub k_start: usize,
    pub k_end: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            t_start: 0.0,
            t_end: 0.8,
            k_start: 16,
            k_end: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub t: f64,
    pub s: usize,
    pub k: usize,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationRecord {
    pub prompt: Vec<Token>,
    pub noisy: TokenSeq,
    pub label_positions: Vec<usize>,
    pub labels: Vec<Token>,
    pub meta: RecordMeta,
}

/// Emits `count` records per `(prompt, truth)` pair, epoch by epoch. Record
/// `j` of `total` sits at curriculum progress `j / (total - 1)`; the window
/// start is drawn uniformly from the valid range.
pub fn emit_records(
    pairs: &[(Vec<Token>, TokenSeq)],
    trajs: &[Trajectory],
    schedule: &Schedule,
    count: usize,
    seed: u64,
    vocab: &Vocab,
) -> Result<Vec<DistillationRecord>, SequenceError> {
    if pairs.len() != trajs.len() {
        return Err(SequenceError::Alignment(format!(
            "{} pairs but {} trajectories",
            pairs.len(),
            trajs.len()
        )));
    }
    if count == 0 {
        return Err(SequenceError::InvalidSchedule("count must be >= 1".into()));
    }
    for (i, ((_, truth), traj)) in pairs.iter().zip(trajs).enumerate() {
        if truth.len() != traj.order.len() {
            return Err(SequenceError::Alignment(format!(
                "pair {i}: truth length {} but trajectory length {}",
                truth.len(),
                traj.order.len()
            )));
        }
    }

    let total = pairs.len() * count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(total);
    for epoch in 0..count {
        for (i, ((prompt, truth), traj)) in pairs.iter().zip(trajs).enumerate() {
            let j = epoch * pairs.len() + i;
            let progress = if total == 1 {
                0.0
            } else {
                j as f64 / (total - 1) as f64
            };
            let t = curriculum_noise(progress, schedule.t_start, schedule.t_end)?;
            let k = curriculum_window(progress, schedule.k_start, schedule.k_end)?;
            let n = truth.len();
            if k > n {
                return Err(SequenceError::InvalidWindow(format!(
                    "window {k} longer than sequence {n}"
                )));
            }
            let s = rng.gen_range(0..=n - k);
            let spec = NoiseSpec { s, k, t };
            let (noisy, label_positions) = build_noisy_sequence(truth, traj, &spec, vocab)?;
            let labels = label_positions
                .iter()
                .map(|&p| truth.tokens()[p - 1])
                .collect();
            records.push(DistillationRecord {
                prompt: prompt.clone(),
                noisy,
                label_positions,
                labels,
                meta: RecordMeta {
                    t,
                    s,
                    k,
                    step_index: j,
                },
            });
        }
    }
    Ok(records)
}
