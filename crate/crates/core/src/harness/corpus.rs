use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::seed;
use crate::sequence::{Token, TokenSeq, Vocab};

/// A prompt and the output expected for it, EOS included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub prompt: Vec<Token>,
    pub reference: Vec<Token>,
}

impl Task {
    pub fn validate(&self, vocab: &Vocab, max_len: Option<usize>) -> Result<(), String> {
        let Some((&last, body)) = self.reference.split_last() else {
            return Err("empty reference".into());
        };
        if last != vocab.eos_id {
            return Err("reference does not end with EOS".into());
        }
        if body.contains(&vocab.eos_id) {
            return Err("reference contains EOS before its end".into());
        }
        if let Some(&t) = self
            .prompt
            .iter()
            .chain(&self.reference)
            .find(|&&t| t >= vocab.size || t == vocab.mask_id)
        {
            return Err(format!("token {t} is the mask or outside the vocabulary"));
        }
        if let Some(n) = max_len {
            if self.reference.len() > n {
                return Err(format!("reference length {} exceeds max_len {n}", self.reference.len()));
            }
        }
        Ok(())
    }
}

/// The task list of a corpus file; other fields are ignored when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub vocab: Vocab,
    pub tasks: Vec<Task>,
}

impl TaskSet {
    pub fn validate(&self, max_len: Option<usize>) -> Result<(), HarnessError> {
        self.vocab
            .validate()
            .map_err(|e| HarnessError::Data(e.to_string()))?;
        if self.tasks.is_empty() {
            return Err(HarnessError::Data("task list is empty".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            t.validate(&self.vocab, max_len)
                .map_err(|m| HarnessError::Data(format!("task {i}: {m}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub vocab_size: u32,
    /// Training sequences.
    pub sequences: usize,
    /// Content tokens per sequence, EOS excluded.
    pub length: usize,
    /// Markov order of the source.
    pub structure: usize,
    /// Held-out task count; defaults to a quarter of `sequences`.
    pub tasks: Option<usize>,
    /// Prompt length of each task; defaults to half of `length`.
    pub prompt_len: Option<usize>,
    /// Probability of the context's preferred token.
    pub peak: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 0,
            vocab_size: 32,
            sequences: 200,
            length: 48,
            structure: 2,
            tasks: None,
            prompt_len: None,
            peak: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub vocab: Vocab,
    pub config: CorpusConfig,
    pub sequences: Vec<TokenSeq>,
    pub tasks: Vec<Task>,
}

impl CorpusFile {
    pub fn task_set(&self) -> TaskSet {
        TaskSet {
            vocab: self.vocab,
            tasks: self.tasks.clone(),
        }
    }
}

/// Order-`structure` Markov source: each context prefers one content token,
/// chosen by hashing the context, and emits it with probability `peak`;
/// otherwise it emits a uniform content token.
struct Source {
    content: Vec<Token>,
    order: usize,
    peak: f64,
    key: u64,
}

impl Source {
    fn preferred(&self, context: &[Token]) -> Token {
        let parts: Vec<u64> = context.iter().map(|&t| t as u64).collect();
        let h = seed::derive(self.key, &parts);
        self.content[(h % self.content.len() as u64) as usize]
    }

    fn sample(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<Token> {
        let mut out: Vec<Token> = Vec::with_capacity(len + 1);
        while out.len() < len {
            let next = if out.len() < self.order {
                self.content[rng.gen_range(0..self.content.len())]
            } else if rng.gen_bool(self.peak) {
                self.preferred(&out[out.len() - self.order..])
            } else {
                self.content[rng.gen_range(0..self.content.len())]
            };
            out.push(next);
        }
        out
    }
}

pub fn gen_corpus(config: &CorpusConfig) -> Result<CorpusFile, HarnessError> {
    let bad = |m: String| Err(HarnessError::Config(m));
    if config.vocab_size < 8 {
        return bad(format!("vocab size must be >= 8, got {}", config.vocab_size));
    }
    if config.structure < 1 {
        return bad("structure must be >= 1".into());
    }
    if config.sequences < 1 || config.length < 1 {
        return bad("sequences and length must be >= 1".into());
    }
    if !(0.0..=1.0).contains(&config.peak) {
        return bad(format!("peak must lie in [0, 1], got {}", config.peak));
    }
    let prompt_len = config.prompt_len.unwrap_or(config.length / 2);
    if prompt_len >= config.length {
        return bad(format!(
            "prompt length {prompt_len} leaves no continuation in length {}",
            config.length
        ));
    }
    let n_tasks = config.tasks.unwrap_or((config.sequences / 4).max(1));

    let vocab = Vocab::with_size(config.vocab_size).map_err(|e| HarnessError::Config(e.to_string()))?;
    let source = Source {
        content: vocab.content().collect(),
        order: config.structure,
        peak: config.peak,
        key: seed::derive(config.seed, &[0x5_0C]),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[1]));
    let sequences = (0..config.sequences)
        .map(|_| {
            let mut s = source.sample(&mut rng, config.length);
            s.push(vocab.eos_id);
            TokenSeq::new(s)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[2]));
    let tasks = (0..n_tasks)
        .map(|_| {
            let mut s = source.sample(&mut rng, config.length);
            let mut reference = s.split_off(prompt_len);
            reference.push(vocab.eos_id);
            Task {
                prompt: s,
                reference,
            }
        })
        .collect();

    Ok(CorpusFile {
        vocab,
        config: *config,
        sequences,
        tasks,
    })
}
