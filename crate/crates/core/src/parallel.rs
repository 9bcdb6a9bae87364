//! Thin wrappers so callers compile with or without the `parallel` feature.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    items.iter().map(f).collect()
}

/// Runs `f` on a pool of `workers` threads (0 = one per core). Nested
/// [`par_map`] calls stay on that pool.
#[cfg(feature = "parallel")]
pub(crate) fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::error::Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn with_workers<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}
