use std::collections::BTreeSet;

use super::{BlockLedger, BlockState, DecodeMode, EngineConfig, EngineError};
use crate::denoiser::{Denoiser, Prediction, ThresholdBias};
use crate::sequence::Token;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decode {
    pub position: usize,
    pub token: Token,
    pub entropy: f64,
    /// Decoded by the progress rule rather than the threshold.
    pub forced: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    /// Sorted by position.
    pub decodes: Vec<Decode>,
    /// Block offsets that fell outside the policy's range.
    pub unbiased_offsets: BTreeSet<usize>,
}

fn lowest_entropy<'a>(preds: impl Iterator<Item = &'a Prediction>) -> Option<&'a Prediction> {
    preds.min_by(|a, b| a.entropy.total_cmp(&b.entropy).then(a.position.cmp(&b.position)))
}

/// Chooses which predicted positions to write this pass.
///
/// Threshold decodes need `entropy < tau_eff` where `tau_eff` is `tau` times
/// the denoiser's bias for the position's block offset. If the frontier
/// block got no threshold decode, its lowest-entropy position (lowest
/// position on ties) is forced. Vanilla mode only ever forces.
pub fn select_decodes(
    predictions: &[Prediction],
    ledger: &BlockLedger,
    config: &EngineConfig,
    denoiser: &dyn Denoiser,
) -> Result<Selection, EngineError> {
    if predictions.is_empty() {
        return Err(EngineError::Contract(
            "no predictions while masked positions remain".into(),
        ));
    }
    let mut sel = Selection::default();
    let decode = |p: &Prediction, forced| Decode {
        position: p.position,
        token: p.mode,
        entropy: p.entropy,
        forced,
    };

    if config.mode != DecodeMode::Vanilla {
        for p in predictions {
            let b = &ledger.blocks[ledger.block_of(p.position)];
            if !b.state.is_decoding() {
                return Err(EngineError::Contract(format!(
                    "prediction for position {} in a {:?} block",
                    p.position, b.state
                )));
            }
            let offset = p.position - b.start + 1;
            let scale = match denoiser.threshold_bias(offset) {
                ThresholdBias::Neutral => 1.0,
                ThresholdBias::Scaled(m) => m,
                ThresholdBias::OutOfRange => {
                    sel.unbiased_offsets.insert(offset);
                    1.0
                }
            };
            if p.entropy < config.tau * scale {
                sel.decodes.push(decode(p, false));
            }
        }
    }

    if let Some(f) = ledger.frontier() {
        let block = &ledger.blocks[f];
        debug_assert_eq!(block.state, BlockState::FullyActivated);
        if !sel.decodes.iter().any(|d| block.contains(d.position)) {
            let forced = lowest_entropy(predictions.iter().filter(|p| block.contains(p.position)))
                .ok_or_else(|| {
                    EngineError::Contract(format!("no predictions for frontier block {f}"))
                })?;
            sel.decodes.push(decode(forced, true));
        }
    }

    sel.decodes.sort_by_key(|d| d.position);
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{ContextView, DenoiseError, OrderPolicy, PolicyDenoiser, ScriptedDenoiser};
    use std::sync::Arc;

    fn pred(position: usize, entropy: f64) -> Prediction {
        Prediction {
            position,
            mode: 1,
            mode_prob: 1.0,
            entropy,
            support: vec![(1, 1.0)],
        }
    }

    struct Nothing;
    impl Denoiser for Nothing {
        fn predict(&self, _: &ContextView<'_>, _: &[usize]) -> Result<Vec<Prediction>, DenoiseError> {
            Ok(vec![])
        }
        fn describe(&self) -> String {
            "nothing".into()
        }
    }

    #[test]
    fn strict_threshold_in_activated_block() {
        let mut l = BlockLedger::new(8, 4);
        l.blocks[0].state = BlockState::Stabilizing;
        l.blocks[0].unmasked = 4;
        l.blocks[1].state = BlockState::Activated;
        let cfg = EngineConfig::default();
        let sel = select_decodes(&[pred(5, 0.2), pred(6, 0.5)], &l, &cfg, &Nothing).unwrap();
        assert_eq!(sel.decodes.iter().map(|d| d.position).collect::<Vec<_>>(), vec![5]);
    }

    #[test]
    fn zero_threshold_forces_exactly_one() {
        let l = BlockLedger::new(4, 4);
        let cfg = EngineConfig {
            tau: 0.0,
            ..Default::default()
        };
        let preds: Vec<_> = (1..=4).map(|p| pred(p, 0.0)).collect();
        let sel = select_decodes(&preds, &l, &cfg, &Nothing).unwrap();
        assert_eq!(sel.decodes.len(), 1);
        assert!(sel.decodes[0].forced);
        assert_eq!(sel.decodes[0].position, 1);
    }

    #[test]
    fn forcing_picks_lowest_entropy_then_lowest_position() {
        let l = BlockLedger::new(4, 4);
        let cfg = EngineConfig::default();
        let sel = select_decodes(
            &[pred(1, 0.9), pred(2, 0.7), pred(3, 0.7), pred(4, 1.0)],
            &l,
            &cfg,
            &Nothing,
        )
        .unwrap();
        assert_eq!(sel.decodes.len(), 1);
        assert_eq!(sel.decodes[0].position, 2);
    }

    #[test]
    fn one_forced_decode_at_the_frontier_only() {
        // Two fully activated blocks, nothing under tau: only the earlier one
        // is forced.
        let mut l = BlockLedger::new(8, 4);
        l.blocks[0].unmasked = 3;
        l.blocks[1].state = BlockState::FullyActivated;
        let cfg = EngineConfig::default();
        let sel = select_decodes(
            &[pred(4, 0.9), pred(5, 0.8), pred(6, 0.7), pred(7, 0.6), pred(8, 0.5)],
            &l,
            &cfg,
            &Nothing,
        )
        .unwrap();
        assert_eq!(sel.decodes.len(), 1);
        assert_eq!(sel.decodes[0].position, 4);
    }

    #[test]
    fn threshold_hit_at_frontier_suppresses_forcing() {
        let l = BlockLedger::new(4, 4);
        let cfg = EngineConfig::default();
        let sel = select_decodes(&[pred(1, 0.9), pred(2, 0.1)], &l, &cfg, &Nothing).unwrap();
        assert_eq!(sel.decodes.len(), 1);
        assert!(!sel.decodes[0].forced);
    }

    #[test]
    fn vanilla_ignores_threshold() {
        let l = BlockLedger::new(4, 4);
        let cfg = EngineConfig {
            mode: DecodeMode::Vanilla,
            ..Default::default()
        };
        let preds: Vec<_> = (1..=4).map(|p| pred(p, 0.0)).collect();
        let sel = select_decodes(&preds, &l, &cfg, &Nothing).unwrap();
        assert_eq!(sel.decodes.len(), 1);
    }

    #[test]
    fn empty_predictions_rejected() {
        let l = BlockLedger::new(4, 4);
        assert!(matches!(
            select_decodes(&[], &l, &EngineConfig::default(), &Nothing),
            Err(EngineError::Contract(_))
        ));
    }

    fn wrapped(mults: Vec<f64>) -> PolicyDenoiser {
        let k = mults.len();
        let base: Arc<dyn Denoiser> = Arc::new(ScriptedDenoiser::uniform(1, 0.0));
        PolicyDenoiser::new(
            base,
            OrderPolicy {
                k_max: k,
                multipliers: mults,
                g_min: 0.5,
                g_max: 1.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn policy_loosens_early_offsets() {
        // Block 2 activated; offset 1 is position 5.
        let mut l = BlockLedger::new(8, 4);
        l.blocks[0].state = BlockState::Stabilizing;
        l.blocks[0].unmasked = 4;
        l.blocks[1].state = BlockState::Activated;
        let cfg = EngineConfig::default();
        let preds = [pred(5, 0.6)];
        let plain = select_decodes(&preds, &l, &cfg, &Nothing).unwrap();
        assert!(plain.decodes.is_empty());
        let w = wrapped(vec![1.5, 1.0, 1.0, 1.0]);
        let biased = select_decodes(&preds, &l, &cfg, &w).unwrap();
        assert_eq!(biased.decodes.len(), 1);
    }

    #[test]
    fn policy_tightens_late_offsets_at_the_boundary() {
        let mut l = BlockLedger::new(8, 4);
        l.blocks[0].state = BlockState::Stabilizing;
        l.blocks[0].unmasked = 4;
        l.blocks[1].state = BlockState::Activated;
        let cfg = EngineConfig::default();
        let w = wrapped(vec![1.0, 1.0, 1.0, 0.5]);
        // tau_eff = 0.45 * 0.5 = 0.225 at offset 4 (position 8).
        for (entropy, decodes) in [(0.3, false), (0.23, false), (0.225, false), (0.22, true)] {
            let sel = select_decodes(&[pred(8, entropy)], &l, &cfg, &w).unwrap();
            assert_eq!(!sel.decodes.is_empty(), decodes, "entropy {entropy}");
        }
    }

    #[test]
    fn out_of_range_offsets_are_reported() {
        let l = BlockLedger::new(4, 4);
        let w = wrapped(vec![1.0, 1.0]);
        let sel = select_decodes(
            &[pred(3, 0.1), pred(4, 0.1)],
            &l,
            &EngineConfig::default(),
            &w,
        )
        .unwrap();
        assert_eq!(sel.decodes.len(), 2);
        assert_eq!(sel.unbiased_offsets, BTreeSet::from([3, 4]));
    }
}
