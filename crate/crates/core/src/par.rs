//! Execution policy for data-parallel loops.
//!
//! Every parallel loop in the crate is written as an indexed map whose body
//! derives its own RNG stream from the index, so the sequential and parallel
//! paths produce bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How to run an indexed loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon when the `parallel` feature is compiled in, otherwise sequential.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Independent RNG stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Split `total` Monte-Carlo draws into fixed-size chunks; returns `(start, len)`.
pub fn chunks(total: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk))
        .map(|i| (i * chunk, chunk.min(total - i * chunk)))
        .collect()
}

/// Count Monte-Carlo successes over `total` trials, chunked for determinism.
pub fn count_hits<F>(exec: Execution, seed: u64, total: usize, trial: F) -> usize
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync + Send,
{
    let parts = chunks(total, 1024);
    map_indexed(exec, parts.len(), |i| {
        let mut rng = stream_rng(seed, i as u64);
        (0..parts[i].1).filter(|_| trial(&mut rng)).count()
    })
    .into_iter()
    .sum()
}

/// Cap the global rayon pool from `SUBSPACE_GP_THREADS`, if set.
/// Returns the number of worker threads in effect.
pub fn init_threads_from_env() -> usize {
    let requested = std::env::var("SUBSPACE_GP_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            // Already-initialised pools are left alone.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |i: usize| {
            let mut rng = stream_rng(7, i as u64);
            rng.random::<f64>()
        };
        let a = map_indexed(Execution::Sequential, 100, f);
        let b = map_indexed(Execution::Parallel, 100, f);
        assert_eq!(a, b);
        let ha = count_hits(Execution::Sequential, 3, 5000, |r| r.random::<f64>() < 0.3);
        let hb = count_hits(Execution::Parallel, 3, 5000, |r| r.random::<f64>() < 0.3);
        assert_eq!(ha, hb);
    }

    #[test]
    fn chunking_covers_everything() {
        let c = chunks(2500, 1024);
        assert_eq!(c, vec![(0, 1024), (1024, 1024), (2048, 452)]);
        assert!(chunks(0, 10).is_empty());
    }
}
