use serde::{Deserialize, Serialize};

use super::{DecodeMode, EngineConfig};

/// Lifecycle of one output block.
///
/// Legal moves: `Inactive -> Activated -> FullyActivated -> Stabilizing ->
/// Completed`, plus `Activated -> Stabilizing` when a block fills up before
/// its predecessor reaches the fully-activated threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockState {
    Inactive,
    Activated,
    FullyActivated,
    Stabilizing,
    Completed,
}

impl BlockState {
    /// Whether the engine requests predictions for this block.
    pub fn is_decoding(self) -> bool {
        matches!(self, BlockState::Activated | BlockState::FullyActivated)
    }

    pub fn can_move_to(self, next: BlockState) -> bool {
        use BlockState::*;
        matches!(
            (self, next),
            (Inactive, Activated)
                | (Activated, FullyActivated)
                | (Activated, Stabilizing)
                | (FullyActivated, Stabilizing)
                | (Stabilizing, Completed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub state: BlockState,
    /// First output position (1-based).
    pub start: usize,
    pub len: usize,
    pub unmasked: usize,
    /// Full passes served while Stabilizing.
    pub stab_rounds: u32,
    /// Passes since the cache was stored or refreshed; Completed blocks only.
    pub cache_age: Option<u32>,
}

impl Block {
    pub fn completion(&self) -> f64 {
        self.unmasked as f64 / self.len as f64
    }

    pub fn is_full(&self) -> bool {
        self.unmasked == self.len
    }

    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn contains(&self, pos: usize) -> bool {
        (self.start..=self.end()).contains(&pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub pass: u64,
    pub block: usize,
    pub from: BlockState,
    pub to: BlockState,
}

/// Per-block bookkeeping for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLedger {
    pub blocks: Vec<Block>,
}

impl BlockLedger {
    /// Lays `max_len` positions out in blocks of `block_size`; the first block
    /// starts FullyActivated because the prompt before it is complete.
    pub fn new(max_len: usize, block_size: usize) -> Self {
        let blocks = (0..max_len.div_ceil(block_size))
            .map(|b| Block {
                state: if b == 0 {
                    BlockState::FullyActivated
                } else {
                    BlockState::Inactive
                },
                start: b * block_size + 1,
                len: block_size.min(max_len - b * block_size),
                unmasked: 0,
                stab_rounds: 0,
                cache_age: None,
            })
            .collect();
        BlockLedger { blocks }
    }

    pub fn block_of(&self, pos: usize) -> usize {
        let size = self.blocks[0].len;
        (pos - 1) / size
    }

    pub fn states(&self) -> Vec<BlockState> {
        self.blocks.iter().map(|b| b.state).collect()
    }

    pub fn cache_ages(&self) -> Vec<Option<u32>> {
        self.blocks.iter().map(|b| b.cache_age).collect()
    }

    /// Predecessor completion for block `i`; the prompt counts as complete.
    pub fn predecessor_completion(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.blocks[i - 1].completion()
        }
    }

    /// Lowest-index FullyActivated block that still has masked positions.
    pub fn frontier(&self) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| b.state == BlockState::FullyActivated && !b.is_full())
    }
}

/// Applies the lifecycle rules in block order, using completion measured at
/// pass start. Blocks with index above `activation_limit` stay Inactive.
pub fn advance_blocks(
    ledger: &mut BlockLedger,
    config: &EngineConfig,
    activation_limit: Option<usize>,
    pass: u64,
) -> Vec<Transition> {
    let (add, full) = match config.mode {
        DecodeMode::MultiBlock => (config.block_add, config.fully_active),
        // One block at a time: the next opens only once the current is full.
        DecodeMode::SingleBlock | DecodeMode::Vanilla => (1.0, 1.0),
    };
    let mut out = Vec::new();
    for i in 0..ledger.blocks.len() {
        let pred = ledger.predecessor_completion(i);
        let block = &mut ledger.blocks[i];
        let mut step = |block: &mut Block, to: BlockState| {
            out.push(Transition {
                pass,
                block: i,
                from: block.state,
                to,
            });
            block.state = to;
        };
        if block.state == BlockState::Inactive
            && pred >= add
            && activation_limit.is_none_or(|limit| i <= limit)
        {
            step(block, BlockState::Activated);
        }
        if block.state == BlockState::Activated && !block.is_full() && pred >= full {
            step(block, BlockState::FullyActivated);
        }
        if block.state.is_decoding() && block.is_full() {
            step(block, BlockState::Stabilizing);
        } else if block.state == BlockState::Stabilizing && block.stab_rounds >= config.cache_delay {
            step(block, BlockState::Completed);
            block.cache_age = Some(0);
        }
    }
    out
}
