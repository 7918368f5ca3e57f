//! The seeded generator behind every sampling and shuffling step.
//!
//! The algorithm is part of the reproducibility contract: ChaCha8 seeded
//! with `seed_from_u64(seed)` and stream `stream`, unbiased bounded draws by
//! rejection on the upper u64 range, and a descending Fisher-Yates shuffle
//! (`for i in (1..n).rev() { swap(i, below(i + 1)) }`).

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifier recorded in manifests.
pub const ALGORITHM: &str = "chacha8-u64-rejection-fisher-yates-v1";

/// Stream ids, one per consumer, so adding draws in one place never
/// perturbs another.
pub mod streams {
    pub const SAMPLE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const EXEMPLARS: u64 = 3;
}

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `0..bound`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
