//! Experiment environments.

mod bandit;
mod grid;
mod idx;
mod noisy_pairs;

pub use bandit::{CorridorBandit, Zone};
pub use grid::{
    Action, Cell, GridConfig, GridWorld, Heading, LayoutSnapshot, StateKey, StepOutcome, CHANNELS,
    MAX_OBS_VALUE,
};
pub use idx::{load_idx, load_idx_labels, parse_idx_images, parse_idx_labels, IdxImages};
pub use noisy_pairs::{NoisyPairsTask, Pair, PairBatch, PairSource};
