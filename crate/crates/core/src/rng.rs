//! Deterministic per-chunk random streams.
//!
//! Work is cut into fixed-size chunks; chunk `i` of domain `d` always uses
//! ChaCha8 keyed by the seed with stream `(d << 40) | i`. Output therefore
//! depends on (seed, chunk size) but not on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

/// Stream domains; disjoint so that e.g. reference and conditional draws never overlap.
pub mod domain {
    pub const CONDITIONAL: u64 = 1;
    pub const REFERENCE: u64 = 2;
    pub const PROPOSAL: u64 = 3;
    pub const PLAIN: u64 = 4;
    pub const AUX: u64 = 5;
}

pub fn stream(seed: u64, domain: u64, chunk: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 40) | chunk);
    rng
}

/// Run `f(chunk_index)` for every chunk and return results in chunk order.
pub fn run_chunks<T, F>(workers: usize, chunks: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers <= 1 || chunks <= 1 {
        return (0..chunks).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..chunks).into_par_iter().map(&f).collect()),
        Err(_) => (0..chunks).map(f).collect(),
    }
}

/// Split `total` items into chunks of at most `size`.
pub fn chunk_sizes(total: u64, size: u64) -> Vec<u64> {
    let size = size.max(1);
    let full = total / size;
    let mut v = vec![size; full as usize];
    if !total.is_multiple_of(size) {
        v.push(total % size);
    }
    v
}
