//! Reproducible random streams.
//!
//! A stream is named by `(master_seed, stream_index)`. The pair is mixed
//! with SplitMix64 into a 256-bit ChaCha8 key; paths are generated in
//! blocks of [`BLOCK_PATHS`] and block `b` reads ChaCha stream number `b`.
//! Block contents therefore do not depend on how many workers run them or
//! in what order. Normal variates come from the ziggurat sampler of
//! `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const BLOCK_PATHS: usize = 4096;

/// Recorded in path provenance; changing the normal sampler changes every
/// simulated number.
pub const GAUSSIAN_METHOD: &str = "chacha8-ziggurat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStreamSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStreamSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStreamSpec {
            master_seed,
            stream_index,
        }
    }

    /// Same master seed, different stream.
    pub fn substream(&self, stream_index: u64) -> Self {
        RngStreamSpec {
            master_seed: self.master_seed,
            stream_index,
        }
    }

    pub fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        let mixed = splitmix64(&mut state);
        let mut state = mixed ^ self.stream_index.wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(block);
        rng
    }
}

pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Row counts of the blocks covering `n_paths`.
pub fn block_sizes(n_paths: usize) -> Vec<usize> {
    let full = n_paths / BLOCK_PATHS;
    let mut sizes = vec![BLOCK_PATHS; full];
    if !n_paths.is_multiple_of(BLOCK_PATHS) {
        sizes.push(n_paths % BLOCK_PATHS);
    }
    sizes
}

/// Runs `f(block_index, rng, rows)` for every block, in parallel, and
/// returns the results in block order.
pub fn map_blocks<T, F>(n_paths: usize, spec: RngStreamSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    block_sizes(n_paths)
        .into_par_iter()
        .enumerate()
        .map(|(b, rows)| {
            let mut rng = spec.block_rng(b as u64);
            f(b, &mut rng, rows)
        })
        .collect()
}
