//! Order-preserving parallel map over sample indices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// `None` for a single thread, so callers run inline without a pool.
pub(crate) fn pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))
}

/// Applies `f` to every item, inline or on `pool`; output keeps input order.
pub(crate) fn ordered_map<T, F>(pool: Option<&rayon::ThreadPool>, items: &[usize], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    match pool {
        Some(pool) => pool.install(|| items.par_iter().map(|&i| f(i)).collect()),
        None => items.iter().map(|&i| f(i)).collect(),
    }
}
