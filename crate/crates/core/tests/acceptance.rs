//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use pardec::aup::{alpha_sweep, compute_aup, format_curve, parse_curve, weight, AupConfig, CurvePoint};
use pardec::denoiser::{
    fit_order_policy, ngram_train, Denoiser, OracleDenoiser, OracleParams, OrderPolicy,
    PolicyDenoiser, ScriptedDenoiser,
};
use pardec::engine::{init_session, run, BlockState, DecodeMode, EngineConfig};
use pardec::harness::io::TrajectoryLine;
use pardec::harness::{
    ablate, build_records, evaluate, gen_corpus, record_trajectories, sweep,
    CorpusConfig, CorpusFile, Task, TaskSet,
};
use pardec::sequence::{
    build_noisy_sequence, curriculum_noise, curriculum_window, NoiseSpec, Schedule, Token,
    TokenSeq, Trajectory, Vocab,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 5;

/// Oracle with a gentle distance decay, so a pass decodes a run of several
/// neighbouring positions and the run can cross block boundaries.
fn wave_oracle(seed: u64) -> OracleParams {
    OracleParams {
        a_max: 0.998,
        c_dist: 0.5,
        c_mask: 0.02,
        dist_scale: 20.0,
        seed,
        ..Default::default()
    }
}

fn corpus(seed: u64, content: usize, prompt: usize, sequences: usize, tasks: usize) -> CorpusFile {
    gen_corpus(&CorpusConfig {
        seed,
        vocab_size: 32,
        sequences,
        length: content + prompt,
        prompt_len: Some(prompt),
        tasks: Some(tasks),
        ..Default::default()
    })
    .unwrap()
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- AUP oracle

/// Written independently of the library: sort, drop duplicates keeping the
/// best accuracy, drop points more than `margin` below the first, then
/// integrate the weighted accuracy with the trapezoid rule.
fn brute_aup(points: &[(f64, f64)], alpha: f64, margin: f64, y_max: Option<f64>) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    let mut uniq: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if uniq.last().map(|l| l.0 != p.0).unwrap_or(true) {
            uniq.push(p);
        }
    }
    let floor = uniq[0].1 - margin;
    let kept: Vec<(f64, f64)> = uniq
        .iter()
        .enumerate()
        .filter(|(i, p)| *i == 0 || p.1 >= floor)
        .map(|(_, p)| *p)
        .collect();
    let top = y_max.unwrap_or_else(|| kept.iter().map(|p| p.1).fold(0.0, f64::max));
    let w = |y: f64| {
        if top <= 0.0 {
            0.0
        } else {
            let v = (-alpha * (1.0 - y / top)).exp();
            if v > 1.0 {
                1.0
            } else {
                v
            }
        }
    };
    let mut area = kept[0].0 * kept[0].1;
    for i in 1..kept.len() {
        let (r0, y0) = kept[i - 1];
        let (r1, y1) = kept[i];
        area += (r1 - r0) * (y0 * w(y0) + y1 * w(y1)) / 2.0;
    }
    area
}

fn pts(raw: &[(f64, f64)]) -> Vec<CurvePoint> {
    raw.iter().map(|&(r, a)| CurvePoint::new(r, a).unwrap()).collect()
}

fn c1_aup_exactness() -> Result<String, String> {
    let t0 = Instant::now();
    for acc in [72.6, 83.9, 39.6, 41.7] {
        let s = compute_aup(&pts(&[(1.0, acc)]), &AupConfig::default()).unwrap().score;
        ensure((s - acc).abs() <= 0.05, || format!("(1.00, {acc}) scored {s}"))?;
    }
    let sweep = alpha_sweep(&pts(&[(1.0, 74.1)]), &[1.0, 2.0, 3.0, 5.0, 10.0], &AupConfig::default()).unwrap();
    for (alpha, s) in &sweep {
        ensure((s - 74.1).abs() <= 0.05, || format!("alpha {alpha} scored {s}"))?;
    }
    within(t0.elapsed(), 1.0)?;
    Ok("4 single-point rows and 5 alpha values within 0.05".into())
}

fn c2_aup_derived_curve() -> Result<String, String> {
    let raw = [(1.0, 80.0), (2.0, 78.0), (3.0, 70.0)];
    let oracle = brute_aup(&raw, 3.0, 5.0, None);
    let lib = compute_aup(&pts(&raw), &AupConfig::with_alpha(3.0)).unwrap().score;
    ensure((oracle - 156.18).abs() <= 0.01, || format!("oracle {oracle}"))?;
    ensure((lib - 156.18).abs() <= 0.01, || format!("library {lib}"))?;
    ensure((lib - oracle).abs() <= 1e-9, || format!("library {lib} vs oracle {oracle}"))?;
    Ok(format!("score {lib:.4}, oracle {oracle:.4}"))
}

fn curve_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.0f64..20.0, 0.0f64..=100.0), 1..8)
}

fn run_prop<S: Strategy>(
    name: &str,
    strat: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner.run(&strat, test).map_err(|e| format!("{name}: {e}"))
}

fn c3_aup_properties() -> Result<String, String> {
    let t0 = Instant::now();
    run_prop("single-point identity", (0.01f64..50.0, 0.0f64..=100.0), |(r, y)| {
        let s = compute_aup(&pts(&[(r, y)]), &AupConfig::default()).unwrap().score;
        prop_assert_eq!(s, r * y);
        Ok(())
    })?;
    run_prop(
        "telescoping",
        (prop::collection::vec(1.0f64..20.0, 1..8), 0.5f64..=100.0),
        |(rhos, y)| {
            let raw: Vec<(f64, f64)> = rhos.iter().map(|&r| (r, y)).collect();
            let cfg = AupConfig { y_max_override: Some(y), ..Default::default() };
            let s = compute_aup(&pts(&raw), &cfg).unwrap().score;
            let rho_m = rhos.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!((s - rho_m * y).abs() <= 1e-9 * (1.0 + rho_m * y));
            Ok(())
        },
    )?;
    run_prop("alpha monotonicity", (curve_strategy(), 0.1f64..10.0, 0.0f64..10.0), |(raw, a, d)| {
        let lo = compute_aup(&pts(&raw), &AupConfig::with_alpha(a)).unwrap().score;
        let hi = compute_aup(&pts(&raw), &AupConfig::with_alpha(a + d)).unwrap().score;
        prop_assert!(hi <= lo + 1e-9, "alpha {} -> {}, alpha {} -> {}", a, lo, a + d, hi);
        Ok(())
    })?;
    run_prop("filter behaviour", (curve_strategy(), 0.0f64..20.0), |(raw, margin)| {
        let cfg = AupConfig { margin, ..Default::default() };
        let r = compute_aup(&pts(&raw), &cfg).unwrap();
        let first = r.included[0];
        let min_rho = raw.iter().map(|p| p.0).fold(f64::MAX, f64::min);
        prop_assert_eq!(first.rho, min_rho);
        prop_assert!(r.included.iter().skip(1).all(|p| p.acc >= first.acc - margin));
        prop_assert!(r.excluded.len() + r.included.len() == raw.len());
        // Removing excluded points leaves the score unchanged.
        let kept: Vec<(f64, f64)> = r.included.iter().map(|p| (p.rho, p.acc)).collect();
        let again = compute_aup(&pts(&kept), &cfg).unwrap().score;
        prop_assert_eq!(again, r.score);
        prop_assert!((r.score - brute_aup(&raw, 3.0, margin, None)).abs() <= 1e-9 * (1.0 + r.score));
        Ok(())
    })?;
    run_prop("permutation invariance", (curve_strategy(), any::<u64>()), |(raw, seed)| {
        let mut shuffled = raw.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = compute_aup(&pts(&raw), &AupConfig::default()).unwrap().score;
        let b = compute_aup(&pts(&shuffled), &AupConfig::default()).unwrap().score;
        prop_assert_eq!(a, b);
        Ok(())
    })?;
    run_prop("weight range", (0.0f64..=100.0, 0.0f64..=100.0, 0.1f64..10.0), |(y1, y2, a)| {
        let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
        let wl = weight(lo, a, 100.0).unwrap();
        let wh = weight(hi, a, 100.0).unwrap();
        prop_assert!(wl > 0.0 && wl <= wh && wh <= 1.0);
        Ok(())
    })?;
    within(t0.elapsed(), 5.0)?;
    Ok("6 properties x 1000 cases, no violations".into())
}

// ------------------------------------------------------ noisy-sequence oracle

/// Per-position case rule, evaluated from scratch for every position.
fn noisy_oracle(truth: &[Token], order: &[usize], s: usize, k: usize, t: f64, mask: Token) -> (Vec<Token>, Vec<usize>) {
    let steps = s + (k as f64 * t - 1e-9).ceil().max(0.0) as usize;
    let revealed = |i: usize| order[..steps].contains(&i);
    let mut noisy = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=truth.len() {
        let tok = if i <= s {
            truth[i - 1]
        } else if i > s + k {
            mask
        } else if revealed(i) {
            truth[i - 1]
        } else {
            labels.push(i);
            mask
        };
        noisy.push(tok);
    }
    (noisy, labels)
}

fn c4_noisy_sequence() -> Result<String, String> {
    let t0 = Instant::now();
    let vocab = Vocab::new(100, 99, 98).unwrap();
    let m = vocab.mask_id;
    let truth = TokenSeq::new(vec![11, 12, 13, 14, 15, 16]);
    let traj = Trajectory { order: vec![1, 2, 4, 3, 6, 5], truth: truth.clone() };
    let cases = [
        (0.5, vec![11, 12, 13, 14, m, m], vec![5]),
        (0.0, vec![11, 12, m, m, m, m], vec![3, 4, 5]),
        (1.0, vec![11, 12, 13, 14, m, m], vec![5]),
    ];
    for (t, want, labels) in cases {
        let (got, lp) = build_noisy_sequence(&truth, &traj, &NoiseSpec { s: 2, k: 3, t }, &vocab).unwrap();
        ensure(got.tokens() == want.as_slice() && lp == labels, || {
            format!("t={t}: got {:?} {:?}", got.tokens(), lp)
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let n = rng.gen_range(1..=16);
        let truth: Vec<Token> = (0..n).map(|_| rng.gen_range(0..98)).collect();
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut rng);
        let k = rng.gen_range(1..=n);
        let s = rng.gen_range(0..=n - k);
        let t = match rng.gen_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            // Exact multiples of 1/k exercise the ceiling.
            2 => rng.gen_range(0..=k) as f64 / k as f64,
            _ => rng.gen::<f64>(),
        };
        let traj = Trajectory { order: order.clone(), truth: TokenSeq::new(truth.clone()) };
        let (got, lp) = build_noisy_sequence(&traj.truth, &traj, &NoiseSpec { s, k, t }, &vocab).unwrap();
        let (want, wl) = noisy_oracle(&truth, &order, s, k, t, m);
        ensure(got.tokens() == want.as_slice() && lp == wl, || {
            format!("case {case}: n={n} s={s} k={k} t={t} order={order:?}")
        })?;
    }
    within(t0.elapsed(), 5.0)?;
    Ok("3 worked examples and 1000 random instances match".into())
}

// ------------------------------------------------------------ state machine

fn c5_state_machine() -> Result<String, String> {
    let t0 = Instant::now();
    let corpus = corpus(55, 200, 16, 4, 100);
    let vocab = corpus.vocab;
    let taus = [0.2, 0.45, 0.9, 1.3];
    let mut passes = 0u64;
    for (i, task) in corpus.tasks.iter().enumerate() {
        let cfg = EngineConfig {
            block_size: 32,
            max_len: 256,
            tau: taus[i % taus.len()],
            early_stop: i % 3 != 0,
            refresh_interval: if i % 5 == 0 { None } else { Some(4) },
            seed: i as u64,
            ..Default::default()
        };
        let oracle = OracleDenoiser::new(OracleParams { seed: i as u64, ..Default::default() }, vocab).unwrap();
        let mut s = init_session(&task.prompt, Some(&task.reference), &vocab, &cfg).unwrap();
        let mut activated_at: Vec<Option<u64>> = vec![None; s.ledger().blocks.len()];
        activated_at[0] = Some(0);
        while !s.is_terminated() {
            let before = s.ledger().clone();
            let masked_before: BTreeSet<usize> = s.output().masked_positions(&vocab).collect();
            let ev = s.step(&oracle).map_err(|e| format!("run {i}: {e}"))?;
            passes += 1;
            ensure(!ev.decodes.is_empty(), || format!("run {i} pass {}: no progress", ev.pass))?;
            let mut state = before.states();
            for t in &ev.transitions {
                ensure(state[t.block] == t.from && t.from.can_move_to(t.to), || {
                    format!("run {i}: illegal {:?}", t)
                })?;
                state[t.block] = t.to;
                if t.to == BlockState::Activated {
                    activated_at[t.block] = Some(ev.pass);
                    let prev = activated_at[t.block - 1];
                    ensure(prev.is_some_and(|p| p <= ev.pass), || {
                        format!("run {i}: block {} activated before block {}", t.block, t.block - 1)
                    })?;
                    ensure(before.predecessor_completion(t.block) >= cfg.block_add, || {
                        format!("run {i}: block {} activated early", t.block)
                    })?;
                }
            }
            let ledger = s.ledger();
            ensure(state == ledger.states(), || format!("run {i}: transitions do not explain states"))?;
            for d in &ev.decodes {
                let b = ledger.block_of(d.position);
                ensure(masked_before.contains(&d.position), || format!("run {i}: rewrote {}", d.position))?;
                ensure(state[b].is_decoding() || before.blocks[b].state.is_decoding() || ledger.blocks[b].state == BlockState::Stabilizing, || {
                    format!("run {i}: decode in {:?} block", state[b])
                })?;
            }
            for (b, blk) in ledger.blocks.iter().enumerate() {
                ensure(blk.cache_age.is_some() == (blk.state == BlockState::Completed), || {
                    format!("run {i}: block {b} cache age {:?} in {:?}", blk.cache_age, blk.state)
                })?;
                if let Some(age) = blk.cache_age {
                    if ev.full_pass {
                        ensure(age == 0, || format!("run {i}: age {age} after a full pass"))?;
                    }
                    if let Some(r) = cfg.refresh_interval {
                        ensure(age < r, || format!("run {i}: age {age} with refresh every {r}"))?;
                    }
                    ensure(age as u64 <= ev.pass, || format!("run {i}: age {age} at pass {}", ev.pass))?;
                }
            }
        }
        let mut replay = init_session(&task.prompt, Some(&task.reference), &vocab, &cfg).unwrap();
        let again = run(&mut replay, &oracle).unwrap();
        ensure(again.metrics.transcript == s.transcript() && again.transitions == s.transitions(), || {
            format!("run {i}: replay differs")
        })?;
        ensure(again.metrics.tpf >= 1.0, || format!("run {i}: TPF {}", again.metrics.tpf))?;
    }
    within(t0.elapsed(), 30.0)?;
    Ok(format!("100 runs, {passes} passes checked"))
}

// ------------------------------------------------------ vanilla degeneracy

fn c6_vanilla_degeneracy() -> Result<String, String> {
    let corpus = corpus(6, 24, 8, 60, 40);
    let tasks = corpus.task_set();
    let vocab = corpus.vocab;
    let oracle: Arc<dyn Denoiser> = Arc::new(OracleDenoiser::new(OracleParams::default(), vocab).unwrap());
    let ngram: Arc<dyn Denoiser> = Arc::new(ngram_train(&corpus.sequences, 2, 0.1, &vocab).unwrap());
    let scripted: Arc<dyn Denoiser> = Arc::new(
        ScriptedDenoiser::uniform(3, 0.0).with(5, 4, 0.7).with(9, vocab.eos_id, 0.0),
    );
    let mut policy = OrderPolicy::identity(32);
    policy.multipliers[0] = 1.5;
    let wrapped: Arc<dyn Denoiser> = Arc::new(PolicyDenoiser::new(oracle.clone(), policy).unwrap());
    let models = [("oracle", oracle), ("ngram", ngram), ("scripted", scripted), ("policy", wrapped)];
    for (name, model) in &models {
        for (mode, tau) in [(DecodeMode::MultiBlock, 0.0), (DecodeMode::Vanilla, 0.45)] {
            let cfg = EngineConfig { block_size: 8, max_len: 32, mode, tau, ..Default::default() };
            let r = evaluate(model.as_ref(), &tasks, &cfg).map_err(|e| e.to_string())?;
            ensure(r.mean_tpf == 1.0, || format!("{name} {mode} tau {tau}: TPF {}", r.mean_tpf))?;
            ensure(r.tasks.iter().all(|t| t.tpf == 1.0), || format!("{name} {mode}: a task has TPF != 1"))?;
        }
    }
    Ok("TPF = 1.00 for 4 models x {multi-block tau 0, vanilla}".into())
}

// ------------------------------------------------------------- hand trace

fn c7_hand_trace() -> Result<String, String> {
    let vocab = Vocab::with_size(16).unwrap();
    let cfg = EngineConfig { block_size: 4, max_len: 8, cache_delay: 1, ..Default::default() };
    let mut s = init_session(&[1, 2], None, &vocab, &cfg).unwrap();
    let out = run(&mut s, &ScriptedDenoiser::uniform(5, 0.0)).map_err(|e| e.to_string())?;
    ensure(out.metrics.forwards == 2 && out.metrics.tpf == 4.0, || {
        format!("forwards {}, TPF {}", out.metrics.forwards, out.metrics.tpf)
    })?;
    Ok("forwards 2, TPF 4.0".into())
}

// --------------------------------------------------------- trade-off curve

fn c8_tradeoff() -> Result<String, String> {
    let t0 = Instant::now();
    let taus = [0.0, 0.2, 0.4, 0.6, 0.9, 1.3];
    let mut tpf = [0.0; 6];
    let mut acc = [0.0; 6];
    for seed in 0..SEEDS {
        let tasks = corpus(seed, 24, 8, 4, 200).task_set();
        let oracle = OracleDenoiser::new(wave_oracle(seed), tasks.vocab).unwrap();
        let cfg = EngineConfig { block_size: 32, max_len: 32, seed, ..Default::default() };
        let report = sweep(&oracle, &tasks, &taus, &cfg, &AupConfig::default()).map_err(|e| e.to_string())?;
        let csv = format_curve(&report.curve);
        let reparsed = compute_aup(&parse_curve(&csv).map_err(|e| e.to_string())?, &AupConfig::default()).unwrap();
        ensure(reparsed.score == report.aup.score, || "AUP differs after CSV round trip".into())?;
        for (i, row) in report.rows.iter().enumerate() {
            tpf[i] += row.mean_tpf / SEEDS as f64;
            acc[i] += row.accuracy / SEEDS as f64;
        }
    }
    ensure(tpf.windows(2).all(|w| w[1] > w[0]), || format!("TPF not increasing: {tpf:?}"))?;
    for i in 0..6 {
        for j in i + 1..6 {
            ensure(acc[j] <= acc[i] + 2.0, || format!("accuracy rises: {acc:?}"))?;
        }
    }
    let curve: Vec<CurvePoint> = tpf.iter().zip(&acc).map(|(&r, &a)| CurvePoint::new(r, a).unwrap()).collect();
    let aup = compute_aup(&curve, &AupConfig::default()).map_err(|e| e.to_string())?;
    within(t0.elapsed(), 120.0)?;
    Ok(format!(
        "TPF {} | acc {} | AUP {:.2}",
        tpf.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" "),
        acc.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" "),
        aup.score
    ))
}

// --------------------------------------------------------------- ablation

fn c9_ablation() -> Result<String, String> {
    let mut multi = 0.0;
    let mut single = 0.0;
    let mut refresh_gain = 0.0;
    let mut saved = 0u64;
    for seed in 0..SEEDS {
        let tasks = corpus(seed, 16, 8, 4, 200).task_set();
        let oracle = OracleDenoiser::new(wave_oracle(seed), tasks.vocab).unwrap();
        ensure(oracle.params().c_stale > 0.0, || "oracle has no staleness penalty".into())?;
        let cfg = EngineConfig { block_size: 8, max_len: 32, tau: 0.6, seed, ..Default::default() };
        let r = ablate(&oracle, &tasks, &cfg).map_err(|e| e.to_string())?;
        let cell = |m, e, f| r.cell(m, e, f).unwrap();
        multi += cell(DecodeMode::MultiBlock, true, true).mean_tpf;
        single += cell(DecodeMode::SingleBlock, true, true).mean_tpf;
        refresh_gain += cell(DecodeMode::MultiBlock, true, true).accuracy
            - cell(DecodeMode::MultiBlock, true, false).accuracy;

        let on = evaluate(&oracle, &tasks, &cfg).map_err(|e| e.to_string())?;
        let off = evaluate(&oracle, &tasks, &EngineConfig { early_stop: false, ..cfg }).map_err(|e| e.to_string())?;
        ensure(on.total_forwards < off.total_forwards, || {
            format!("seed {seed}: early stop forwards {} vs {}", on.total_forwards, off.total_forwards)
        })?;
        for (a, b) in on.tasks.iter().zip(&off.tasks) {
            ensure(a.output == b.output && a.forwards <= b.forwards, || {
                format!("seed {seed} task {}: early stop changed the output", a.index)
            })?;
        }
        saved += off.total_forwards - on.total_forwards;
    }
    let gain = 100.0 * (multi / single - 1.0);
    ensure(gain >= 10.0, || format!("multi-block TPF gain {gain:.1}%"))?;
    let refresh_gain = refresh_gain / SEEDS as f64;
    ensure(refresh_gain >= 0.0, || format!("refresh accuracy change {refresh_gain:.2}"))?;
    Ok(format!(
        "multi-block +{gain:.1}% TPF; early stop saves {saved} forwards; refresh {refresh_gain:+.2} acc"
    ))
}

// ----------------------------------------------------------- distillation

fn shuffled(lines: &[TrajectoryLine], seed: u64) -> Vec<TrajectoryLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lines
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.order.shuffle(&mut rng);
            l
        })
        .collect()
}

fn fit(lines: &[TrajectoryLine], vocab: &Vocab, seed: u64) -> OrderPolicy {
    let records: Vec<_> = build_records(lines, &Schedule::default(), 4, seed)
        .unwrap()
        .iter()
        .map(|r| r.to_record().unwrap())
        .collect();
    fit_order_policy(&records, vocab, OrderPolicy::DEFAULT_G_MIN, OrderPolicy::DEFAULT_G_MAX).unwrap()
}

fn c10_distillation() -> Result<String, String> {
    let t0 = Instant::now();
    let (mut tpf_s, mut tpf_u, mut acc_s, mut acc_u) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..SEEDS {
        let corpus = corpus(seed, 16, 8, 100, 200);
        let vocab = corpus.vocab;
        let teacher: Arc<dyn Denoiser> = Arc::new(OracleDenoiser::new(wave_oracle(seed), vocab).unwrap());
        let train = TaskSet {
            vocab,
            tasks: corpus
                .sequences
                .iter()
                .map(|s| Task { prompt: s.tokens()[..8].to_vec(), reference: s.tokens()[8..].to_vec() })
                .collect(),
        };
        let held_out = corpus.task_set();
        ensure(train.tasks.iter().all(|t| !held_out.tasks.contains(t)), || "held-out task seen in training".into())?;
        let lines = record_trajectories(teacher.as_ref(), &train, 32, seed).map_err(|e| e.to_string())?;
        let structured = fit(&lines, &vocab, seed);
        let uniform = fit(&shuffled(&lines, seed), &vocab, seed);
        let cfg = EngineConfig { block_size: 8, max_len: 32, tau: 0.2, seed, ..Default::default() };
        let rs = evaluate(&PolicyDenoiser::new(teacher.clone(), structured).unwrap(), &held_out, &cfg).map_err(|e| e.to_string())?;
        let ru = evaluate(&PolicyDenoiser::new(teacher.clone(), uniform).unwrap(), &held_out, &cfg).map_err(|e| e.to_string())?;
        tpf_s += rs.mean_tpf / SEEDS as f64;
        tpf_u += ru.mean_tpf / SEEDS as f64;
        acc_s += rs.accuracy / SEEDS as f64;
        acc_u += ru.accuracy / SEEDS as f64;
    }
    let gain = 100.0 * (tpf_s / tpf_u - 1.0);
    ensure(gain >= 5.0, || format!("TPF gain {gain:.1}%"))?;
    ensure(acc_s >= acc_u - 1.0, || format!("accuracy {acc_s:.2} vs {acc_u:.2}"))?;
    within(t0.elapsed(), 120.0)?;
    Ok(format!(
        "structured {tpf_s:.3} TPF / {acc_s:.1}% vs shuffled {tpf_u:.3} / {acc_u:.1}% (+{gain:.1}% TPF)"
    ))
}

// -------------------------------------------------------------- curriculum

fn c11_curriculum() -> Result<String, String> {
    let noise: Vec<f64> = [0.0, 0.5, 1.0].iter().map(|&p| curriculum_noise(p, 0.0, 0.8).unwrap()).collect();
    let window: Vec<usize> = [0.0, 0.5, 1.0].iter().map(|&p| curriculum_window(p, 16, 32).unwrap()).collect();
    ensure(noise == [0.0, 0.4, 0.8], || format!("noise {noise:?}"))?;
    ensure(window == [16, 24, 32], || format!("window {window:?}"))?;
    Ok("t 0 / 0.4 / 0.8, k 16 / 24 / 32".into())
}

fn main() {
    // Silence the default panic message; failures are reported below.
    panic::set_hook(Box::new(|_| {}));
    type Criterion = (&'static str, fn() -> Result<String, String>);
    let criteria: [Criterion; 11] = [
        ("AUP exactness", c1_aup_exactness),
        ("AUP derived curve", c2_aup_derived_curve),
        ("AUP properties", c3_aup_properties),
        ("noisy-sequence oracle", c4_noisy_sequence),
        ("state-machine soundness", c5_state_machine),
        ("vanilla degeneracy", c6_vanilla_degeneracy),
        ("pipeline hand trace", c7_hand_trace),
        ("trade-off emergence", c8_tradeoff),
        ("ablation directionality", c9_ablation),
        ("distillation directionality", c10_distillation),
        ("curriculum schedules", c11_curriculum),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {reason}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
