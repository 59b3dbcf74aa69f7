use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One reproducible random stream: ChaCha8 keyed by `seed`, with `stream_id`
/// selecting an independent 2^64-block stream under the same key.
///
/// Identical `(seed, stream_id)` pairs yield identical draws on every platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Stream id for job `seed_index` of sweep cell `cell_index`.
pub fn job_stream_id(cell_index: usize, seed_index: usize) -> u64 {
    ((cell_index as u64) << 32) | seed_index as u64
}
