use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Task, TaskSet};
use crate::aup::{compute_aup, AupConfig, AupResult, CurvePoint};
use crate::denoiser::Denoiser;
use crate::engine::{init_session, run, DecodeMode, EngineConfig, TranscriptEvent};
use crate::seed;
use crate::sequence::Token;

/// Reports always pool tokens and forwards over tasks.
const AGGREGATION: &str = "micro";

/// Session seed for a task. It depends on the task's content, not its
/// index, so results do not change when tasks are reordered.
pub fn task_seed(base: u64, task: &Task) -> u64 {
    let mut parts: Vec<u64> = Vec::with_capacity(task.prompt.len() + task.reference.len() + 1);
    parts.extend(task.prompt.iter().map(|&t| t as u64));
    parts.push(u64::MAX);
    parts.extend(task.reference.iter().map(|&t| t as u64));
    seed::derive(base, &parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub index: usize,
    pub correct: bool,
    pub output: Vec<Token>,
    pub forwards: u64,
    pub full_forwards: u64,
    pub tokens_generated: u64,
    pub tpf: f64,
    pub refresh_events: u64,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: DecodeMode,
    pub tau: f64,
    pub aggregation: String,
    /// Percentage of tasks whose output matches the reference up to and
    /// including the first EOS.
    pub accuracy: f64,
    /// Total tokens over total forwards.
    pub mean_tpf: f64,
    pub total_tokens: u64,
    pub total_forwards: u64,
    pub warnings: Vec<String>,
    pub tasks: Vec<TaskResult>,
    /// Informational only; never serialized.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

fn evaluate_inner(
    denoiser: &dyn Denoiser,
    tasks: &TaskSet,
    config: &EngineConfig,
    transcripts: bool,
) -> Result<EvalReport, HarnessError> {
    config
        .validate()
        .map_err(|source| HarnessError::Task { task: 0, source })?;
    tasks.validate(Some(config.max_len))?;
    let vocab = tasks.vocab;
    let started = Instant::now();
    let results: Vec<(TaskResult, Vec<String>)> = tasks
        .tasks
        .par_iter()
        .enumerate()
        .map(|(index, task)| {
            let cfg = EngineConfig {
                seed: task_seed(config.seed, task),
                ..*config
            };
            let wrap = |source| HarnessError::Task { task: index, source };
            let mut session =
                init_session(&task.prompt, Some(&task.reference), &vocab, &cfg).map_err(wrap)?;
            let out = run(&mut session, denoiser).map_err(wrap)?;
            let m = out.metrics;
            Ok((
                TaskResult {
                    index,
                    correct: out.output == task.reference,
                    output: out.output,
                    forwards: m.forwards,
                    full_forwards: m.full_forwards,
                    tokens_generated: m.tokens_generated,
                    tpf: m.tpf,
                    refresh_events: m.refresh_events,
                    truncated: m.truncated,
                    transcript: if transcripts { m.transcript } else { Vec::new() },
                },
                out.warnings,
            ))
        })
        .collect::<Result<_, HarnessError>>()?;

    let total_tokens: u64 = results.iter().map(|(r, _)| r.tokens_generated).sum();
    let total_forwards: u64 = results.iter().map(|(r, _)| r.forwards).sum();
    let correct = results.iter().filter(|(r, _)| r.correct).count();
    let warnings: BTreeSet<String> = results.iter().flat_map(|(_, w)| w.iter().cloned()).collect();
    Ok(EvalReport {
        mode: config.mode,
        tau: config.tau,
        aggregation: AGGREGATION.into(),
        accuracy: 100.0 * correct as f64 / results.len() as f64,
        mean_tpf: total_tokens as f64 / total_forwards as f64,
        total_tokens,
        total_forwards,
        warnings: warnings.into_iter().collect(),
        tasks: results.into_iter().map(|(r, _)| r).collect(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// Decodes every task and scores exact-match accuracy and pooled TPF.
/// Tasks run in parallel; each gets its own session seed.
pub fn evaluate(
    denoiser: &dyn Denoiser,
    tasks: &TaskSet,
    config: &EngineConfig,
) -> Result<EvalReport, HarnessError> {
    evaluate_inner(denoiser, tasks, config, false)
}

/// As [`evaluate`], keeping each task's decode transcript.
pub fn evaluate_with_transcripts(
    denoiser: &dyn Denoiser,
    tasks: &TaskSet,
    config: &EngineConfig,
) -> Result<EvalReport, HarnessError> {
    evaluate_inner(denoiser, tasks, config, true)
}

/// Parses `A:B:STEP` (inclusive) or a comma-separated list.
pub fn parse_taus(s: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = |m: String| HarnessError::Config(format!("taus `{s}`: {m}"));
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("`{x}`: {e}")))
    };
    let taus = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(bad("expected A:B:STEP".into()));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(bad("need STEP > 0 and B >= A".into()));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    check_taus(&taus)?;
    Ok(taus)
}

fn check_taus(taus: &[f64]) -> Result<(), HarnessError> {
    if taus.is_empty() {
        return Err(HarnessError::Config("no thresholds given".into()));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(HarnessError::Config("thresholds must be finite and >= 0".into()));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config("thresholds must be strictly ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub mean_tpf: f64,
    pub accuracy: f64,
    pub total_tokens: u64,
    pub total_forwards: u64,
    pub tasks: Vec<TaskResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub aggregation: String,
    pub mode: DecodeMode,
    pub rows: Vec<SweepRow>,
    /// `(mean TPF, accuracy)` per threshold, in threshold order.
    pub curve: Vec<CurvePoint>,
    pub aup: AupResult,
    pub warnings: Vec<String>,
}

/// Evaluates once per threshold and scores the resulting curve.
pub fn sweep(
    denoiser: &dyn Denoiser,
    tasks: &TaskSet,
    taus: &[f64],
    config: &EngineConfig,
    aup_config: &AupConfig,
) -> Result<SweepReport, HarnessError> {
    check_taus(taus)?;
    aup_config.validate()?;
    let mut rows = Vec::with_capacity(taus.len());
    let mut warnings = BTreeSet::new();
    for &tau in taus {
        let r = evaluate(denoiser, tasks, &EngineConfig { tau, ..*config })?;
        warnings.extend(r.warnings);
        rows.push(SweepRow {
            tau,
            mean_tpf: r.mean_tpf,
            accuracy: r.accuracy,
            total_tokens: r.total_tokens,
            total_forwards: r.total_forwards,
            tasks: r.tasks,
        });
    }
    let curve = rows
        .iter()
        .map(|r| CurvePoint::new(r.mean_tpf, r.accuracy))
        .collect::<Result<Vec<_>, _>>()?;
    let aup = compute_aup(&curve, aup_config)?;
    Ok(SweepReport {
        aggregation: AGGREGATION.into(),
        mode: config.mode,
        rows,
        curve,
        aup,
        warnings: warnings.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub mode: DecodeMode,
    pub early_stop: bool,
    pub refresh: bool,
    pub mean_tpf: f64,
    pub accuracy: f64,
    pub total_forwards: u64,
    /// Percent change in TPF against the single-block cell with the same
    /// early-stop and refresh settings.
    pub tpf_delta_pct: f64,
    /// Accuracy difference in points against the same single-block cell.
    pub accuracy_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub tau: f64,
    pub aggregation: String,
    /// Refresh interval used by cells with refresh on.
    pub refresh_interval: u32,
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, mode: DecodeMode, early_stop: bool, refresh: bool) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.early_stop == early_stop && c.refresh == refresh)
    }
}

/// Runs {vanilla, single-block, multi-block} x {early stop on, off} x
/// {refresh on, off} at the configured threshold.
pub fn ablate(
    denoiser: &dyn Denoiser,
    tasks: &TaskSet,
    config: &EngineConfig,
) -> Result<AblationReport, HarnessError> {
    let interval = config
        .refresh_interval
        .or(EngineConfig::default().refresh_interval)
        .expect("default refresh interval");
    let mut raw = Vec::with_capacity(12);
    for mode in [DecodeMode::Vanilla, DecodeMode::SingleBlock, DecodeMode::MultiBlock] {
        for early_stop in [true, false] {
            for refresh in [true, false] {
                let cfg = EngineConfig {
                    mode,
                    early_stop,
                    refresh_interval: refresh.then_some(interval),
                    ..*config
                };
                let r = evaluate(denoiser, tasks, &cfg)?;
                raw.push((mode, early_stop, refresh, r));
            }
        }
    }
    let baseline = |early_stop: bool, refresh: bool| {
        raw.iter()
            .find(|(m, e, f, _)| *m == DecodeMode::SingleBlock && *e == early_stop && *f == refresh)
            .map(|(_, _, _, r)| (r.mean_tpf, r.accuracy))
            .expect("single-block cell present")
    };
    let cells = raw
        .iter()
        .map(|(mode, early_stop, refresh, r)| {
            let (tpf0, acc0) = baseline(*early_stop, *refresh);
            AblationCell {
                mode: *mode,
                early_stop: *early_stop,
                refresh: *refresh,
                mean_tpf: r.mean_tpf,
                accuracy: r.accuracy,
                total_forwards: r.total_forwards,
                tpf_delta_pct: 100.0 * (r.mean_tpf / tpf0 - 1.0),
                accuracy_delta: r.accuracy - acc0,
            }
        })
        .collect();
    Ok(AblationReport {
        tau: config.tau,
        aggregation: AGGREGATION.into(),
        refresh_interval: interval,
        cells,
    })
}
