//! Independent random streams derived from one run seed.
//!
//! Each consumer gets its own ChaCha stream so that, for example, two runs
//! with the same seed but different schedules see the same minibatches even
//! though their policies consume different amounts of randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Synthetic suite generation.
    Data = 1,
    /// Per-step minibatch draws for every task and the validation set.
    Minibatches = 2,
    /// `sample_task` draws.
    TaskSampling = 3,
    /// The use-or-train coin.
    Coin = 4,
    ModelInit = 5,
    SchedulerInit = 6,
    /// Replay-buffer minibatch draws for scheduler training.
    Replay = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    sub_stream_rng(seed, stream as u64, 0)
}

/// Stream `stream` further split by `index` (e.g. one per task).
pub fn sub_stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | index);
    rng
}
