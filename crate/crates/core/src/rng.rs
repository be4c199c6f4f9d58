//! Counter-based sample keys.
//!
//! Every random draw in a study is addressed by `(run, level, index)`. The
//! key selects an independent ChaCha stream, so a sample can be regenerated
//! in isolation and the coarse/fine halves of a correction share one draw.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub run: u64,
    pub level: u32,
    pub index: u64,
}

impl SampleKey {
    pub fn new(run: u64, level: u32, index: u64) -> Self {
        Self { run, level, index }
    }

    /// Independent generator for this key.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.run);
        // 24 bits of level leave 40 bits of sample index per level.
        rng.set_stream(((self.level as u64) << 40) | (self.index & ((1 << 40) - 1)));
        rng
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run={} level={} index={}", self.run, self.level, self.index)
    }
}

/// Derives a child run id, e.g. one namespace per tolerance of a study.
pub fn derive_run(base: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag and index, folded with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in tag.bytes().chain(index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
