//! Deterministic per-replicate random streams.
//!
//! A `(master_seed, stream_index)` pair maps to a ChaCha8 generator whose
//! 256-bit key is four consecutive SplitMix64 outputs seeded with
//! `master_seed`, and whose 64-bit stream id is `stream_index`. The mapping
//! is stateless, so replicate `i` can be regenerated in isolation and thread
//! scheduling never changes which numbers a replicate sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Same stream index under a master seed mixed with `tag`. Used to give
    /// independent sub-experiments of one job their own families of streams.
    pub fn derive(&self, tag: u64) -> SeedSpec {
        let mut s = self.master_seed ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03);
        SeedSpec {
            master_seed: splitmix64(&mut s),
            stream_index: self.stream_index,
        }
    }

    pub fn with_stream(&self, stream_index: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_index,
        }
    }
}

/// SplitMix64 step (Steele, Lea, Flood 2014).
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
