use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{peaked_entropy, peaked_support, ContextView, DenoiseError, Denoiser, Prediction};
use crate::sequence::{Token, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub token: Token,
    pub entropy: f64,
}

/// On-disk form: `{"entries": [{"position": 1, "token": 5, "entropy": 0.0}],
/// "default": {"token": 0, "entropy": 0.0}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub entries: Vec<ScriptLine>,
    #[serde(default)]
    pub default: Option<ScriptEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptLine {
    pub position: usize,
    pub token: Token,
    pub entropy: f64,
}

/// Returns the same `(token, entropy)` for a position regardless of context.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDenoiser {
    table: BTreeMap<usize, ScriptEntry>,
    default: Option<ScriptEntry>,
}

impl ScriptedDenoiser {
    pub fn new(table: BTreeMap<usize, ScriptEntry>) -> Self {
        ScriptedDenoiser {
            table,
            default: None,
        }
    }

    /// Every position yields `token` with entropy `entropy` unless scripted
    /// otherwise.
    pub fn uniform(token: Token, entropy: f64) -> Self {
        ScriptedDenoiser {
            table: BTreeMap::new(),
            default: Some(ScriptEntry { token, entropy }),
        }
    }

    pub fn with(mut self, position: usize, token: Token, entropy: f64) -> Self {
        self.table.insert(position, ScriptEntry { token, entropy });
        self
    }

    pub fn from_file(file: &ScriptFile) -> Result<Self, DenoiseError> {
        let mut table = BTreeMap::new();
        for line in &file.entries {
            if line.position == 0 {
                return Err(DenoiseError::Config("script positions are 1-based".into()));
            }
            if !(line.entropy >= 0.0) {
                return Err(DenoiseError::Config(format!(
                    "negative entropy at position {}",
                    line.position
                )));
            }
            table.insert(
                line.position,
                ScriptEntry {
                    token: line.token,
                    entropy: line.entropy,
                },
            );
        }
        Ok(ScriptedDenoiser {
            table,
            default: file.default,
        })
    }

    fn entry(&self, position: usize) -> Result<ScriptEntry, DenoiseError> {
        self.table
            .get(&position)
            .copied()
            .or(self.default)
            .ok_or_else(|| DenoiseError::Config(format!("no script entry for position {position}")))
    }
}

/// A distribution with mode `token` and exactly entropy `h`: mass `q` on the
/// mode, the remainder spread over every other emittable token, with `q`
/// found by bisection.
fn support_with_entropy(
    token: Token,
    h: f64,
    vocab: &Vocab,
) -> Result<(Vec<(Token, f64)>, f64), DenoiseError> {
    if token == vocab.mask_id {
        return Err(DenoiseError::Config("scripted token is the mask token".into()));
    }
    if h <= 0.0 {
        return Ok((vec![(token, 1.0)], 1.0));
    }
    let others: Vec<Token> = vocab.emittable().filter(|&t| t != token).collect();
    let d = others.len();
    let h_max = ((d + 1) as f64).ln();
    if h > h_max + 1e-12 {
        return Err(DenoiseError::Config(format!(
            "entropy {h} exceeds ln({}) = {h_max}",
            d + 1
        )));
    }
    // peaked_entropy is decreasing in q on [1/(d+1), 1].
    let (mut lo, mut hi) = (1.0 / (d + 1) as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if peaked_entropy(mid, d) > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    Ok((peaked_support(token, q, &others), q))
}

impl Denoiser for ScriptedDenoiser {
    fn predict(
        &self,
        view: &ContextView<'_>,
        positions: &[usize],
    ) -> Result<Vec<Prediction>, DenoiseError> {
        view.check_requested(positions)?;
        positions
            .iter()
            .map(|&p| {
                let e = self.entry(p)?;
                let (support, q) = support_with_entropy(e.token, e.entropy, view.vocab)?;
                Ok(Prediction {
                    position: p,
                    mode: e.token,
                    mode_prob: q,
                    entropy: e.entropy.max(0.0),
                    support,
                })
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!("scripted({} entries)", self.table.len())
    }
}
