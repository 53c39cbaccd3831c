//! Bidirectional n-gram denoiser.
//!
//! Training counts the centre token of every `(left, right)` context with up
//! to `order` neighbours on each side. At prediction time the longest run of
//! revealed neighbours on each side forms the query context; unseen contexts
//! back off by dropping the outermost token of the longer side until a
//! counted context (ultimately the unigram) is found. Additive smoothing
//! spreads `smoothing` pseudo-counts over every emittable token.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ContextView, DenoiseError, Denoiser, Prediction};
use crate::sequence::{Token, TokenSeq, Vocab};

type Context = (Vec<Token>, Vec<Token>);

#[derive(Debug, Clone)]
pub struct NGramDenoiser {
    order: usize,
    smoothing: f64,
    vocab: Vocab,
    tables: HashMap<Context, BTreeMap<Token, u64>>,
}

/// Versioned JSON container for a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModelFile {
    pub version: u32,
    pub order: usize,
    pub smoothing: f64,
    pub vocab: Vocab,
    pub tables: Vec<NGramTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramTable {
    pub left: Vec<Token>,
    pub right: Vec<Token>,
    pub counts: Vec<(Token, u64)>,
}

pub const NGRAM_FILE_VERSION: u32 = 1;

pub fn ngram_train(
    corpus: &[TokenSeq],
    order: usize,
    smoothing: f64,
    vocab: &Vocab,
) -> Result<NGramDenoiser, DenoiseError> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(DenoiseError::Training("empty corpus".into()));
    }
    if order < 1 {
        return Err(DenoiseError::Training("order must be >= 1".into()));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(DenoiseError::Training(format!("invalid smoothing {smoothing}")));
    }
    let mut tables: HashMap<Context, BTreeMap<Token, u64>> = HashMap::new();
    for seq in corpus {
        let toks = seq.tokens();
        if let Some(t) = toks.iter().find(|&&t| t == vocab.mask_id || t >= vocab.size) {
            return Err(DenoiseError::Training(format!("corpus token {t} not emittable")));
        }
        for (i, &centre) in toks.iter().enumerate() {
            for l in 0..=order.min(i) {
                for r in 0..=order.min(toks.len() - 1 - i) {
                    let key = (toks[i - l..i].to_vec(), toks[i + 1..i + 1 + r].to_vec());
                    *tables.entry(key).or_default().entry(centre).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(NGramDenoiser {
        order,
        smoothing,
        vocab: *vocab,
        tables,
    })
}

impl NGramDenoiser {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn to_file(&self) -> NGramModelFile {
        let mut tables: Vec<NGramTable> = self
            .tables
            .iter()
            .map(|((left, right), counts)| NGramTable {
                left: left.clone(),
                right: right.clone(),
                counts: counts.iter().map(|(&t, &c)| (t, c)).collect(),
            })
            .collect();
        tables.sort_by(|a, b| (a.left.len() + a.right.len(), &a.left, &a.right).cmp(&(
            b.left.len() + b.right.len(),
            &b.left,
            &b.right,
        )));
        NGramModelFile {
            version: NGRAM_FILE_VERSION,
            order: self.order,
            smoothing: self.smoothing,
            vocab: self.vocab,
            tables,
        }
    }

    pub fn from_file(file: NGramModelFile) -> Result<Self, DenoiseError> {
        if file.version != NGRAM_FILE_VERSION {
            return Err(DenoiseError::Config(format!(
                "unsupported n-gram file version {}",
                file.version
            )));
        }
        file.vocab
            .validate()
            .map_err(|e| DenoiseError::Config(e.to_string()))?;
        let tables = file
            .tables
            .into_iter()
            .map(|t| ((t.left, t.right), t.counts.into_iter().collect()))
            .collect();
        Ok(NGramDenoiser {
            order: file.order,
            smoothing: file.smoothing,
            vocab: file.vocab,
            tables,
        })
    }

    /// Longest revealed neighbourhoods around `pos`, capped at `order`. The
    /// prompt continues the left side.
    fn context(&self, view: &ContextView<'_>, pos: usize) -> Context {
        let out = view.output.tokens();
        let mask = view.vocab.mask_id;
        let mut left = Vec::new();
        let left_stream = out[..pos - 1].iter().rev().chain(view.prompt.iter().rev());
        for &t in left_stream.take(self.order) {
            if t == mask {
                break;
            }
            left.push(t);
        }
        left.reverse();
        let right: Vec<Token> = out[pos..]
            .iter()
            .take(self.order)
            .take_while(|&&t| t != mask)
            .copied()
            .collect();
        (left, right)
    }

    /// Counts for the longest counted sub-context of `(left, right)`.
    fn backoff(&self, mut left: &[Token], mut right: &[Token]) -> Option<&BTreeMap<Token, u64>> {
        loop {
            if let Some(c) = self.tables.get(&(left.to_vec(), right.to_vec())) {
                return Some(c);
            }
            if left.is_empty() && right.is_empty() {
                return None;
            }
            if left.len() >= right.len() {
                left = &left[1..];
            } else {
                right = &right[..right.len() - 1];
            }
        }
    }

    /// Smoothed distribution over emittable tokens for one context.
    pub fn distribution(&self, left: &[Token], right: &[Token]) -> Vec<(Token, f64)> {
        let empty = BTreeMap::new();
        let counts = self.backoff(left, right).unwrap_or(&empty);
        let total: u64 = counts.values().sum();
        let n_tokens = self.vocab.emittable().count() as f64;
        let denom = total as f64 + self.smoothing * n_tokens;
        if denom == 0.0 {
            let p = 1.0 / n_tokens;
            return self.vocab.emittable().map(|t| (t, p)).collect();
        }
        self.vocab
            .emittable()
            .map(|t| {
                let c = counts.get(&t).copied().unwrap_or(0) as f64;
                (t, (c + self.smoothing) / denom)
            })
            .filter(|(_, p)| *p > 0.0)
            .collect()
    }
}

impl Denoiser for NGramDenoiser {
    fn predict(
        &self,
        view: &ContextView<'_>,
        positions: &[usize],
    ) -> Result<Vec<Prediction>, DenoiseError> {
        view.check_requested(positions)?;
        if view.vocab != &self.vocab {
            return Err(DenoiseError::Config(
                "session vocabulary differs from the n-gram model's".into(),
            ));
        }
        Ok(positions
            .iter()
            .map(|&p| {
                let (left, right) = self.context(view, p);
                let support = self.distribution(&left, &right);
                // Highest probability, lowest token id on ties.
                let mode = support
                    .iter()
                    .fold(None::<(Token, f64)>, |best, &(t, q)| match best {
                        Some((_, bq)) if bq >= q => best,
                        _ => Some((t, q)),
                    })
                    .map(|(t, _)| t)
                    .unwrap_or(self.vocab.eos_id);
                Prediction::from_support(p, mode, support)
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("ngram(order={}, smoothing={})", self.order, self.smoothing)
    }
}
