//! Counter-based random streams.

use rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stream tag for height-1 runs.
pub const TAG_RUN: u64 = 1;
/// Stream tag for target-placement draws.
pub const TAG_TARGET: u64 = 2;
/// Stream tag for warm-up jumper cycles.
pub const TAG_WARM: u64 = 3;
/// Stream tag for replayed tree/compact streams.
pub const TAG_TREE: u64 = 4;
/// Stream tag for race and window histograms.
pub const TAG_HIST: u64 = 5;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 generator keyed by a seed and a path of stream words.
///
/// Streams with different paths are statistically independent, so every run
/// can own its generator regardless of which thread executes it.
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
}

impl StreamRng {
    pub fn for_stream(seed: u64, words: &[u64]) -> Self {
        let mut state = mix(seed.wrapping_add(GOLDEN));
        for &w in words {
            state = mix(state ^ mix(w.wrapping_add(GOLDEN)));
        }
        Self { state }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
