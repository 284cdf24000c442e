//! Named, independently seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the scenario seed, with the
//! ChaCha stream selector set from `(kind, index)`. Streams never share state,
//! so drawing more traffic randomness cannot shift a node's trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Mobility = 1,
    Traffic = 2,
    Topology = 3,
    Jitter = 4,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    kind: StreamKind,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// `index` separates sub-streams of one kind (e.g. one mobility stream per node).
    pub fn new(seed: u64, kind: StreamKind, index: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((kind as u64) << 32) | u64::from(index));
        RngStream { kind, rng }
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Uniform in `[lo, hi]`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Uniform integer in `[-bound, bound]`.
    pub fn symmetric(&mut self, bound: i64) -> i64 {
        if bound <= 0 {
            0
        } else {
            self.rng.gen_range(-bound..=bound)
        }
    }

    /// Draws `k` distinct elements of `pool`, in draw order.
    pub fn sample<T: Copy>(&mut self, pool: &[T], k: usize) -> Vec<T> {
        let mut pool = pool.to_vec();
        let k = k.min(pool.len());
        for i in 0..k {
            let j = i + self.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
