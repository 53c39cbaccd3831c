//! Seeded simulator that knows the target output.
//!
//! Each masked position gets a quality `q` in `[a_min, a_max]` that drops as
//! the position is farther from revealed context, as its block is emptier,
//! and as the caches of the completed blocks before it grow stale. The
//! prediction puts mass `q` on its mode and spreads the rest over `decoys`
//! alternatives, so the reported entropy is a deterministic function of `q`.
//!
//! Whether the mode is the target token is decided by comparing a uniform
//! draw `u(seed, position)` against `q`. Because `u` does not depend on the
//! context, a position that is decoded correctly under some context is also
//! decoded correctly under any context with higher `q`. Which decoy becomes
//! the mode on a miss does depend on the revealed set.

use serde::{Deserialize, Serialize};

use super::{peaked_support, ContextView, DenoiseError, Denoiser, Prediction};
use crate::seed;
use crate::sequence::{Token, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub a_max: f64,
    pub a_min: f64,
    pub c_dist: f64,
    pub c_mask: f64,
    pub c_stale: f64,
    /// Distance (in positions) at which the distance penalty saturates.
    #[serde(rename = "D")]
    pub dist_scale: f64,
    pub decoys: usize,
    /// Cache age (in passes) at which the staleness penalty saturates.
    #[serde(rename = "A")]
    pub stale_scale: f64,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            a_max: 0.98,
            a_min: 0.20,
            c_dist: 0.15,
            c_mask: 0.35,
            c_stale: 0.25,
            dist_scale: 8.0,
            decoys: 4,
            stale_scale: 8.0,
            seed: 0,
        }
    }
}

impl OracleParams {
    pub fn validate(&self, vocab: &Vocab) -> Result<(), DenoiseError> {
        let bad = |m: String| Err(DenoiseError::Config(m));
        if !(0.0 < self.a_min && self.a_min <= self.a_max && self.a_max <= 1.0) {
            return bad(format!(
                "need 0 < a_min <= a_max <= 1, got a_min={} a_max={}",
                self.a_min, self.a_max
            ));
        }
        if [self.c_dist, self.c_mask, self.c_stale]
            .iter()
            .any(|c| !(*c >= 0.0))
        {
            return bad("penalty coefficients must be >= 0".into());
        }
        if !(self.dist_scale > 0.0 && self.stale_scale > 0.0) {
            return bad("D and A must be > 0".into());
        }
        if self.decoys < 1 || self.decoys + 1 > vocab.size as usize - 1 {
            return bad(format!(
                "decoys must lie in 1..={} for vocabulary size {}",
                vocab.size as usize - 2,
                vocab.size
            ));
        }
        Ok(())
    }
}

/// Probability that the oracle's mode is the target token at `position`.
///
/// The distance term counts the masked positions separating `position` from
/// the nearest revealed token (an adjacent neighbour gives 0; the prompt sits
/// just left of position 1). The mask term is the masked fraction of the
/// *other* positions in the same block.
pub fn oracle_quality(view: &ContextView<'_>, position: usize, params: &OracleParams) -> f64 {
    let n = view.output.len();

    let left = (1..position)
        .rev()
        .find(|&p| view.is_revealed(p))
        .map(|p| position - p - 1)
        .or_else(|| (!view.prompt.is_empty()).then_some(position - 1));
    let right = (position + 1..=n)
        .find(|&p| view.is_revealed(p))
        .map(|p| p - position - 1);
    let gap = match (left, right) {
        (Some(a), Some(b)) => a.min(b) as f64,
        (Some(a), None) | (None, Some(a)) => a as f64,
        (None, None) => f64::INFINITY,
    };

    let block = view.block_of(position);
    let others: Vec<usize> = view.block_range(block).filter(|&p| p != position).collect();
    let m_frac = if others.is_empty() {
        0.0
    } else {
        others.iter().filter(|&&p| !view.is_revealed(p)).count() as f64 / others.len() as f64
    };

    let ages: Vec<f64> = (0..block)
        .filter_map(|b| view.cache_age(b))
        .map(|age| (age as f64 / params.stale_scale).min(1.0))
        .collect();
    let s_frac = if ages.is_empty() {
        0.0
    } else {
        ages.iter().sum::<f64>() / ages.len() as f64
    };

    let q = params.a_max
        - params.c_dist * gap.min(params.dist_scale) / params.dist_scale
        - params.c_mask * m_frac
        - params.c_stale * s_frac;
    q.clamp(params.a_min, params.a_max)
}

#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    params: OracleParams,
    vocab: Vocab,
}

impl OracleDenoiser {
    pub fn new(params: OracleParams, vocab: Vocab) -> Result<Self, DenoiseError> {
        params.validate(&vocab)?;
        Ok(OracleDenoiser { params, vocab })
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    /// `decoys` distinct emittable tokens other than `truth`, fixed per
    /// `(seed, position, truth)`.
    fn decoys(&self, seed: u64, position: usize, truth: Token) -> Vec<Token> {
        let pool: Vec<Token> = self.vocab.emittable().filter(|&t| t != truth).collect();
        let mut picked = Vec::with_capacity(self.params.decoys);
        let mut pool = pool;
        let mut h = seed::derive(seed, &[position as u64, truth as u64, 0xDEC0]);
        while picked.len() < self.params.decoys {
            h = seed::mix64(h);
            let i = (h % pool.len() as u64) as usize;
            picked.push(pool.swap_remove(i));
        }
        picked
    }
}

/// Order-sensitive hash of the revealed output positions.
fn revealed_fingerprint(view: &ContextView<'_>) -> u64 {
    (1..=view.output.len())
        .filter(|&p| view.is_revealed(p))
        .fold(0x5EED_u64, |acc, p| seed::mix64(acc ^ p as u64))
}

impl Denoiser for OracleDenoiser {
    fn predict(
        &self,
        view: &ContextView<'_>,
        positions: &[usize],
    ) -> Result<Vec<Prediction>, DenoiseError> {
        view.check_requested(positions)?;
        let target = view
            .target
            .ok_or_else(|| DenoiseError::Config("oracle requires a target output".into()))?;
        if target.len() != view.output.len() {
            return Err(DenoiseError::Config(format!(
                "target length {} differs from output length {}",
                target.len(),
                view.output.len()
            )));
        }
        let session = seed::derive(self.params.seed, &[view.seed]);
        let fingerprint = revealed_fingerprint(view);
        Ok(positions
            .iter()
            .map(|&p| {
                let truth = target[p - 1];
                let q = oracle_quality(view, p, &self.params);
                let decoys = self.decoys(session, p, truth);
                let u = seed::unit(seed::derive(session, &[p as u64, 0xD2A]));
                let (mode, others) = if u < q {
                    (truth, decoys)
                } else {
                    let pick = seed::derive(session, &[p as u64, fingerprint]) as usize % decoys.len();
                    let mut others = decoys.clone();
                    let wrong = others.remove(pick);
                    others.push(truth);
                    (wrong, others)
                };
                Prediction::from_support(p, mode, peaked_support(mode, q, &others))
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("oracle({:?})", self.params)
    }
}
