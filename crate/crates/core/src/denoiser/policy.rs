//! Order policy distilled from pseudo-trajectory records.
//!
//! Instead of training a network, the student here is a per-offset bias on
//! the decode threshold. For each offset `o` inside the supervision window we
//! count how often the teacher had already revealed `s + o` in the recorded
//! state (its *earliness*). Offsets the teacher tends to decode early get a
//! looser threshold, late ones a tighter threshold.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ContextView, DenoiseError, Denoiser, Prediction, ThresholdBias};
use crate::sequence::{DistillationRecord, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderPolicy {
    pub k_max: usize,
    /// `multipliers[o - 1]` scales the threshold at block offset `o`.
    pub multipliers: Vec<f64>,
    pub g_min: f64,
    pub g_max: f64,
}

impl OrderPolicy {
    pub const DEFAULT_G_MIN: f64 = 0.5;
    pub const DEFAULT_G_MAX: f64 = 1.5;

    /// All multipliers equal to 1.
    pub fn identity(k_max: usize) -> Self {
        OrderPolicy {
            k_max,
            multipliers: vec![1.0; k_max],
            g_min: Self::DEFAULT_G_MIN,
            g_max: Self::DEFAULT_G_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), DenoiseError> {
        if self.multipliers.len() != self.k_max {
            return Err(DenoiseError::Config(format!(
                "policy has {} multipliers for k_max {}",
                self.multipliers.len(),
                self.k_max
            )));
        }
        if !(0.0 <= self.g_min && self.g_min <= self.g_max) {
            return Err(DenoiseError::Config("need 0 <= g_min <= g_max".into()));
        }
        if let Some(m) = self
            .multipliers
            .iter()
            .find(|&&m| !(self.g_min..=self.g_max).contains(&m))
        {
            return Err(DenoiseError::Config(format!(
                "multiplier {m} outside [{}, {}]",
                self.g_min, self.g_max
            )));
        }
        Ok(())
    }

    pub fn multiplier(&self, offset: usize) -> Option<f64> {
        offset
            .checked_sub(1)
            .and_then(|i| self.multipliers.get(i))
            .copied()
    }
}

/// Fits multipliers `clamp(2 * earliness(o), g_min, g_max)`.
pub fn fit_order_policy(
    records: &[DistillationRecord],
    vocab: &Vocab,
    g_min: f64,
    g_max: f64,
) -> Result<OrderPolicy, DenoiseError> {
    let k_max = records
        .iter()
        .map(|r| r.meta.k)
        .max()
        .ok_or_else(|| DenoiseError::Fit("no records".into()))?;
    if k_max == 0 {
        return Err(DenoiseError::Fit("records have empty windows".into()));
    }
    let mut present = vec![0u64; k_max];
    let mut revealed = vec![0u64; k_max];
    for r in records {
        for o in 1..=r.meta.k {
            let pos = r.meta.s + o;
            if pos > r.noisy.len() {
                return Err(DenoiseError::Fit(format!(
                    "record {} window exceeds its sequence",
                    r.meta.step_index
                )));
            }
            present[o - 1] += 1;
            if !r.noisy.is_masked(pos, vocab) {
                revealed[o - 1] += 1;
            }
        }
    }
    let multipliers = present
        .iter()
        .zip(&revealed)
        .map(|(&n, &hit)| (2.0 * hit as f64 / n as f64).clamp(g_min, g_max))
        .collect();
    let policy = OrderPolicy {
        k_max,
        multipliers,
        g_min,
        g_max,
    };
    policy.validate()?;
    Ok(policy)
}

/// Delegates predictions to `base` and exposes the policy's threshold bias.
#[derive(Clone)]
pub struct PolicyDenoiser {
    base: Arc<dyn Denoiser>,
    policy: OrderPolicy,
}

impl PolicyDenoiser {
    pub fn new(base: Arc<dyn Denoiser>, policy: OrderPolicy) -> Result<Self, DenoiseError> {
        policy.validate()?;
        Ok(PolicyDenoiser { base, policy })
    }

    pub fn policy(&self) -> &OrderPolicy {
        &self.policy
    }
}

impl Denoiser for PolicyDenoiser {
    fn predict(
        &self,
        view: &ContextView<'_>,
        positions: &[usize],
    ) -> Result<Vec<Prediction>, DenoiseError> {
        self.base.predict(view, positions)
    }

    fn threshold_bias(&self, offset: usize) -> ThresholdBias {
        match self.policy.multiplier(offset) {
            Some(m) => ThresholdBias::Scaled(m),
            None => ThresholdBias::OutOfRange,
        }
    }

    fn policy_k_max(&self) -> Option<usize> {
        Some(self.policy.k_max)
    }

    fn describe(&self) -> String {
        format!("policy(k_max={}) over {}", self.policy.k_max, self.base.describe())
    }
}
