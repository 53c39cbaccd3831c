use pardec::denoiser::{OracleDenoiser, OracleParams, ScriptedDenoiser};
use pardec::engine::{init_session, run, DecodeMode, EngineConfig};
use pardec::sequence::{
    build_noisy_sequence, curriculum_noise, curriculum_window, unmasked_set, NoiseSpec, Token,
    TokenSeq, Trajectory, Vocab,
};
use proptest::prelude::*;

fn trajectory(n: usize) -> impl Strategy<Value = (Vec<Token>, Vec<usize>)> {
    (
        prop::collection::vec(0u32..30, n),
        Just((1..=n).collect::<Vec<usize>>()).prop_shuffle(),
    )
}

fn instance() -> impl Strategy<Value = (Vec<Token>, Vec<usize>, usize, usize, f64)> {
    (1usize..=24)
        .prop_flat_map(|n| (trajectory(n), 1..=n))
        .prop_flat_map(|((truth, order), k)| {
            let n = truth.len();
            (Just(truth), Just(order), 0..=n - k, Just(k), 0.0f64..=1.0)
        })
}

proptest! {
    #[test]
    fn noisy_sequence_case_rule((truth, order, s, k, t) in instance()) {
        let vocab = Vocab::with_size(32).unwrap();
        let seq = TokenSeq::new(truth.clone());
        let traj = Trajectory { order, truth: seq.clone() };
        let spec = NoiseSpec { s, k, t };
        let (noisy, labels) = build_noisy_sequence(&seq, &traj, &spec, &vocab).unwrap();
        let u = unmasked_set(&traj, spec.replay_steps()).unwrap();
        for i in 1..=truth.len() {
            let tok = noisy.get(i).unwrap();
            if i <= s {
                prop_assert_eq!(tok, truth[i - 1]);
            } else if i > s + k {
                prop_assert_eq!(tok, vocab.mask_id);
            } else if u.contains(&i) {
                prop_assert_eq!(tok, truth[i - 1]);
            } else {
                prop_assert_eq!(tok, vocab.mask_id);
                prop_assert!(labels.contains(&i));
            }
        }
        prop_assert!(labels.iter().all(|&p| p > s && p <= s + k));
    }

    #[test]
    fn larger_t_reveals_a_superset((truth, order, s, k, t) in instance(), dt in 0.0f64..1.0) {
        let vocab = Vocab::with_size(32).unwrap();
        let seq = TokenSeq::new(truth);
        let traj = Trajectory { order, truth: seq.clone() };
        let t2 = (t + dt).min(1.0);
        let (_, l1) = build_noisy_sequence(&seq, &traj, &NoiseSpec { s, k, t }, &vocab).unwrap();
        let (_, l2) = build_noisy_sequence(&seq, &traj, &NoiseSpec { s, k, t: t2 }, &vocab).unwrap();
        prop_assert!(l2.iter().all(|p| l1.contains(p)));
    }

    #[test]
    fn schedules_are_monotone(p in 0.0f64..=1.0, q in 0.0f64..=1.0, k0 in 1usize..40, dk in 0usize..40) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(curriculum_noise(lo, 0.0, 0.8).unwrap() <= curriculum_noise(hi, 0.0, 0.8).unwrap());
        let w_lo = curriculum_window(lo, k0, k0 + dk).unwrap();
        let w_hi = curriculum_window(hi, k0, k0 + dk).unwrap();
        prop_assert!(w_lo <= w_hi && k0 <= w_lo && w_hi <= k0 + dk);
    }

    #[test]
    fn decoding_never_rewrites_and_always_finishes(
        seed in any::<u64>(),
        tau in 0.0f64..2.0,
        block in 1usize..12,
        len in 1usize..40,
        mode in prop_oneof![Just(DecodeMode::MultiBlock), Just(DecodeMode::SingleBlock), Just(DecodeMode::Vanilla)],
    ) {
        let vocab = Vocab::with_size(16).unwrap();
        let max_len = len.div_ceil(block) * block;
        let target: Vec<Token> = (0..len as u32).map(|i| (i * 7 + seed as u32) % 14).collect();
        let cfg = EngineConfig { block_size: block, max_len, tau, mode, seed, early_stop: false, ..Default::default() };
        let oracle = OracleDenoiser::new(OracleParams { seed, ..Default::default() }, vocab).unwrap();
        let mut s = init_session(&[1, 2, 3], Some(&target), &vocab, &cfg).unwrap();
        let out = run(&mut s, &oracle).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for e in &out.metrics.transcript {
            prop_assert!(seen.insert(e.position), "position {} decoded twice", e.position);
        }
        prop_assert_eq!(seen.len(), max_len);
        prop_assert!(out.metrics.tpf >= 1.0);
        prop_assert!(s.ledger().blocks.iter().all(|b| b.is_full()));
        if mode == DecodeMode::Vanilla || tau == 0.0 {
            prop_assert_eq!(out.metrics.tpf, 1.0);
        }
    }

    #[test]
    fn zero_entropy_script_finishes_each_block_in_one_pass(block in 1usize..10, blocks in 1usize..5) {
        let vocab = Vocab::with_size(16).unwrap();
        let cfg = EngineConfig { block_size: block, max_len: block * blocks, mode: DecodeMode::SingleBlock, ..Default::default() };
        let mut s = init_session(&[1], None, &vocab, &cfg).unwrap();
        let out = run(&mut s, &ScriptedDenoiser::uniform(4, 0.0)).unwrap();
        prop_assert_eq!(out.metrics.forwards as usize, blocks);
    }
}
