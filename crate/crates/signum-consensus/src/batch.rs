//! Order-preserving batch evaluation.
//!
//! With the `parallel` feature (default) jobs run on the rayon pool;
//! without it the same code path degrades to a sequential loop. Results are
//! collected in job order either way, so batch output is a pure function of
//! the job list regardless of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `jobs`, preserving order.
#[cfg(feature = "parallel")]
pub fn run_batch<I, O, F>(jobs: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    jobs.par_iter().map(f).collect()
}

/// Map `f` over `jobs`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn run_batch<I, O, F>(jobs: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    jobs.iter().map(f).collect()
}

/// Always-sequential baseline, kept for determinism cross-checks and the
/// parallel-vs-sequential benchmarks.
pub fn run_batch_sequential<I, O, F>(jobs: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    jobs.iter().map(f).collect()
}
