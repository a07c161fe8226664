//! Data-parallel helpers. With the default `parallel` feature the work runs
//! on rayon; without it the same code runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

/// Map over items, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Run `f` on a pool with the given number of worker threads. `None` uses
/// the default pool. Without the `parallel` feature the worker count is
/// irrelevant and `f` runs on the calling thread.
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R>(_workers: Option<usize>, f: impl FnOnce() -> R) -> Result<R> {
    Ok(f())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let squares = map((0..100).collect::<Vec<i64>>(), |x| x * x);
        assert_eq!(squares, (0..100).map(|x| x * x).collect::<Vec<i64>>());
    }

    #[test]
    fn with_workers_runs_closure() {
        let out = with_workers(Some(2), || map(vec![1, 2, 3], |x| x + 1)).unwrap();
        assert_eq!(out, vec![2, 3, 4]);
        let out = with_workers(None, || 7).unwrap();
        assert_eq!(out, 7);
    }
}
