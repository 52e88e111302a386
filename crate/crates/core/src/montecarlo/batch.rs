//! Deterministic sample batches over a fixed number of workers.

use rand_chacha::ChaCha8Rng;

use super::rng::sample_rng;
use crate::error::{Error, Result};

/// Worker count used when the caller does not choose one.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `runner(rng, index)` for `index in 0..n`, each with the stream of
/// `(seed, index)`, and returns the outputs in index order. The output does
/// not depend on `workers`.
pub fn batch<T, F>(runner: F, n: usize, seed: u64, workers: usize) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync + Send,
{
    if n == 0 {
        return Err(Error::validation("n", "at least one sample is required"));
    }
    if workers == 0 {
        return Err(Error::validation("workers", "at least one worker is required"));
    }
    let one = |i: usize| {
        let mut rng = sample_rng(seed, i as u64);
        runner(&mut rng, i as u64)
    };
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        return Ok(pool.install(|| (0..n).into_par_iter().map(one).collect()));
    }
    Ok((0..n).map(one).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_across_worker_counts() {
        let f = |rng: &mut ChaCha8Rng, i: u64| rng.random::<f64>() + i as f64;
        let a = batch(f, 257, 11, 1).unwrap();
        let b = batch(f, 257, 11, 8).unwrap();
        assert_eq!(a, b);
        assert!(batch(f, 0, 11, 1).is_err());
        assert!(batch(f, 3, 11, 0).is_err());
    }
}
