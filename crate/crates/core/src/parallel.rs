//! Order-preserving parallel map over an index range.

use rayon::prelude::*;

/// Computes `f(0), …, f(n − 1)` on `workers` threads and returns the results
/// in index order. With keyed RNG streams the output does not depend on the
/// worker count.
pub fn map_indexed<R, F>(workers: usize, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}
