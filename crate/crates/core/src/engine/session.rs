use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    advance_blocks, select_decodes, BlockLedger, BlockState, Decode, DecodeMode, EngineConfig,
    EngineError, Transition,
};
use crate::denoiser::{ContextView, Denoiser};
use crate::sequence::{Token, TokenSeq, Vocab};

/// One decode event: `[pass, position, token, entropy]` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u64, usize, Token, f64)", into = "(u64, usize, Token, f64)")]
pub struct TranscriptEvent {
    pub pass: u64,
    pub position: usize,
    pub token: Token,
    pub entropy: f64,
}

impl From<(u64, usize, Token, f64)> for TranscriptEvent {
    fn from((pass, position, token, entropy): (u64, usize, Token, f64)) -> Self {
        TranscriptEvent {
            pass,
            position,
            token,
            entropy,
        }
    }
}

impl From<TranscriptEvent> for (u64, usize, Token, f64) {
    fn from(e: TranscriptEvent) -> Self {
        (e.pass, e.position, e.token, e.entropy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeMetrics {
    pub forwards: u64,
    /// Passes computed without the cache (stabilization and refresh).
    pub full_forwards: u64,
    /// Positions decoded before the run stopped.
    pub tokens_generated: u64,
    pub tpf: f64,
    pub refresh_events: u64,
    /// No EOS with a complete prefix appeared within `max_len`.
    pub truncated: bool,
    /// Informational only; excluded from every reproducibility check.
    pub wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Output up to and including the first EOS (whole output when none).
    pub output: Vec<Token>,
    pub metrics: DecodeMetrics,
    pub transitions: Vec<Transition>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEvents {
    pub pass: u64,
    pub full_pass: bool,
    pub transitions: Vec<Transition>,
    pub decodes: Vec<Decode>,
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct Session {
    config: EngineConfig,
    vocab: Vocab,
    prompt: Vec<Token>,
    target: Option<Vec<Token>>,
    output: TokenSeq,
    ledger: BlockLedger,
    pass: u64,
    full_forwards: u64,
    refresh_events: u64,
    transcript: Vec<TranscriptEvent>,
    transitions: Vec<Transition>,
    warnings: Vec<String>,
    warned_offsets: BTreeSet<usize>,
    /// An EOS with a fully decoded prefix has been seen.
    eos_settled: bool,
    /// Position where an early-stopped run ended.
    stopped_at: Option<usize>,
    terminated: bool,
}

/// Lays out `max_len` masked positions (padded up to a whole number of
/// blocks) after `prompt`. A `target`, when given, is padded with EOS to the
/// output length.
pub fn init_session(
    prompt: &[Token],
    target: Option<&[Token]>,
    vocab: &Vocab,
    config: &EngineConfig,
) -> Result<Session, EngineError> {
    config.validate()?;
    let mut config = *config;
    let mut warnings = Vec::new();
    if !config.max_len.is_multiple_of(config.block_size) {
        let padded = config.max_len.div_ceil(config.block_size) * config.block_size;
        warnings.push(format!(
            "max_len {} is not a multiple of block size {}; padded to {padded}",
            config.max_len, config.block_size
        ));
        config.max_len = padded;
    }
    let target = match target {
        Some(t) if t.len() > config.max_len => {
            return Err(EngineError::Config(format!(
                "target length {} exceeds max_len {}",
                t.len(),
                config.max_len
            )))
        }
        Some(t) => {
            let mut t = t.to_vec();
            t.resize(config.max_len, vocab.eos_id);
            Some(t)
        }
        None => None,
    };
    Ok(Session {
        config,
        vocab: *vocab,
        prompt: prompt.to_vec(),
        target,
        output: TokenSeq::masked(config.max_len, vocab),
        ledger: BlockLedger::new(config.max_len, config.block_size),
        pass: 0,
        full_forwards: 0,
        refresh_events: 0,
        transcript: Vec::new(),
        transitions: Vec::new(),
        warnings,
        warned_offsets: BTreeSet::new(),
        eos_settled: false,
        stopped_at: None,
        terminated: false,
    })
}

impl Session {
    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn ledger(&self) -> &BlockLedger {
        &self.ledger
    }

    pub fn output(&self) -> &TokenSeq {
        &self.output
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn passes(&self) -> u64 {
        self.pass
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    fn first_eos(&self) -> Option<usize> {
        self.output
            .tokens()
            .iter()
            .position(|&t| t == self.vocab.eos_id)
            .map(|i| i + 1)
    }

    fn prefix_complete(&self, pos: usize) -> bool {
        !self.output.tokens()[..pos - 1].contains(&self.vocab.mask_id)
    }

    /// Block index beyond which nothing may activate: set while an EOS is
    /// present but its prefix is still incomplete.
    fn activation_limit(&self) -> Option<usize> {
        if self.eos_settled {
            return None;
        }
        self.first_eos().map(|p| self.ledger.block_of(p))
    }

    /// Runs one denoiser pass.
    pub fn step(&mut self, denoiser: &dyn Denoiser) -> Result<StepEvents, EngineError> {
        if self.terminated {
            return Err(EngineError::Terminated);
        }
        self.pass += 1;
        let pass = self.pass;

        let limit = self.activation_limit();
        let transitions = advance_blocks(&mut self.ledger, &self.config, limit, pass);
        self.transitions.extend_from_slice(&transitions);

        let stabilizing = self
            .ledger
            .blocks
            .iter()
            .any(|b| b.state == BlockState::Stabilizing);
        let periodic = self
            .config
            .refresh_interval
            .is_some_and(|r| pass.is_multiple_of(r as u64));
        let full_pass = stabilizing || periodic;
        if full_pass {
            self.full_forwards += 1;
            let mut had_cache = false;
            for b in &mut self.ledger.blocks {
                if let Some(age) = b.cache_age.as_mut() {
                    had_cache = true;
                    *age = 0;
                }
            }
            if had_cache {
                self.refresh_events += 1;
            }
        } else {
            for age in self.ledger.blocks.iter_mut().filter_map(|b| b.cache_age.as_mut()) {
                *age += 1;
            }
        }

        let positions: Vec<usize> = self
            .ledger
            .blocks
            .iter()
            .filter(|b| b.state.is_decoding())
            .flat_map(|b| b.start..=b.end())
            .filter(|&p| self.output.is_masked(p, &self.vocab))
            .collect();
        if positions.is_empty() {
            return Err(EngineError::Invariant(format!(
                "pass {pass}: no decodable positions in a running session"
            )));
        }

        let ages = self.ledger.cache_ages();
        let view = ContextView {
            prompt: &self.prompt,
            output: &self.output,
            block_size: self.config.block_size,
            cache_ages: &ages,
            target: self.target.as_deref(),
            vocab: &self.vocab,
            seed: self.config.seed,
        };
        let predictions = denoiser
            .predict(&view, &positions)
            .map_err(|source| EngineError::Denoiser { pass, source })?;
        if predictions.len() != positions.len()
            || predictions.iter().zip(&positions).any(|(p, &q)| p.position != q)
        {
            return Err(EngineError::Contract(format!(
                "pass {pass}: denoiser answered {} of {} requested positions",
                predictions.len(),
                positions.len()
            )));
        }

        let selection = select_decodes(&predictions, &self.ledger, &self.config, denoiser)?;
        for offset in selection.unbiased_offsets {
            if self.warned_offsets.insert(offset) {
                self.warnings.push(format!(
                    "block offset {offset} is beyond the policy window; multiplier 1.0 used"
                ));
            }
        }
        if selection.decodes.is_empty() {
            return Err(EngineError::Invariant(format!("pass {pass} decoded nothing")));
        }
        for d in &selection.decodes {
            if d.token == self.vocab.mask_id {
                return Err(EngineError::Contract(format!(
                    "pass {pass}: mask token decoded at position {}",
                    d.position
                )));
            }
            self.output.set(d.position, d.token);
            let b = self.ledger.block_of(d.position);
            self.ledger.blocks[b].unmasked += 1;
            self.transcript.push(TranscriptEvent {
                pass,
                position: d.position,
                token: d.token,
                entropy: d.entropy,
            });
        }

        if full_pass {
            for b in &mut self.ledger.blocks {
                if b.state == BlockState::Stabilizing {
                    b.stab_rounds += 1;
                }
            }
        }

        if let Some(p) = self.first_eos() {
            if !self.eos_settled && self.prefix_complete(p) {
                self.eos_settled = true;
                if self.config.early_stop {
                    self.stopped_at = Some(p);
                    self.terminated = true;
                }
            }
        }
        if !self.output.tokens().contains(&self.vocab.mask_id) {
            self.terminated = true;
        }

        Ok(StepEvents {
            pass,
            full_pass,
            transitions,
            decodes: selection.decodes,
            terminated: self.terminated,
        })
    }

    fn outcome(&self, wall_clock_s: f64) -> DecodeOutcome {
        let tokens = self.output.tokens();
        let eos = self.first_eos();
        let output = match (self.stopped_at, eos) {
            (Some(p), _) | (None, Some(p)) => tokens[..p].to_vec(),
            (None, None) => tokens.to_vec(),
        };
        let truncated = !self.eos_settled;
        let tokens_generated = self.transcript.len() as u64;
        let forwards = self.pass;
        DecodeOutcome {
            output,
            metrics: DecodeMetrics {
                forwards,
                full_forwards: self.full_forwards,
                tokens_generated,
                tpf: if forwards == 0 {
                    0.0
                } else {
                    tokens_generated as f64 / forwards as f64
                },
                refresh_events: self.refresh_events,
                truncated,
                wall_clock_s,
                transcript: self.transcript.clone(),
            },
            transitions: self.transitions.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Steps until the session terminates.
pub fn run(session: &mut Session, denoiser: &dyn Denoiser) -> Result<DecodeOutcome, EngineError> {
    if let Some(k) = denoiser.policy_k_max() {
        if k < session.config.block_size {
            session.warnings.push(format!(
                "policy window {k} is shorter than block size {}",
                session.config.block_size
            ));
        }
    }
    let started = Instant::now();
    // Every pass decodes at least one position.
    let limit = session.config.max_len as u64;
    while !session.terminated {
        if session.pass >= limit {
            return Err(EngineError::Invariant(format!(
                "no termination after {limit} passes"
            )));
        }
        session.step(denoiser)?;
    }
    Ok(session.outcome(started.elapsed().as_secs_f64()))
}

/// Runs `session` under one of the single-block baselines.
pub fn run_baseline(
    session: &mut Session,
    denoiser: &dyn Denoiser,
    mode: DecodeMode,
) -> Result<DecodeOutcome, EngineError> {
    if mode == DecodeMode::MultiBlock {
        return Err(EngineError::Config(
            "baseline mode must be vanilla or single-block".into(),
        ));
    }
    if session.pass > 0 {
        return Err(EngineError::Config("baseline must start from a fresh session".into()));
    }
    session.config.mode = mode;
    run(session, denoiser)
}
