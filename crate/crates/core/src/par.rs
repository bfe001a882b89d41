//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! a rayon pool (sized by `XQC_THREADS` when set); without it everything runs
//! sequentially. Results are always returned in index order.

/// Worker count requested through `XQC_THREADS`, if any.
pub fn requested_threads() -> Option<usize> {
    std::env::var("XQC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

#[cfg(feature = "parallel")]
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference path, always available (benchmarks compare both).
pub fn map_indices_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Run `f` inside a pool capped at `XQC_THREADS` workers.
#[cfg(feature = "parallel")]
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match requested_threads() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    f()
}
