//! Realization-level work distribution.
//!
//! Results are always collected in task-index order, so output never depends
//! on the worker count. Without the `parallel` feature every call runs
//! sequentially on the calling thread.

#[cfg(any(test, feature = "parallel"))]
use crate::error::Error;
use crate::error::Result;

/// Worker count; `0` selects one worker per available core.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct Workers(pub usize);

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(1);

    pub fn resolved(self) -> usize {
        match self.0 {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

/// `(0..count).map(task)` distributed over `workers`, results in index order.
pub fn map_indexed<T, F>(count: usize, workers: Workers, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let threads = workers.resolved();
    if threads <= 1 || count <= 1 {
        return (0..count).map(task).collect();
    }
    run_pool(count, threads, task)
}

#[cfg(feature = "parallel")]
fn run_pool<T, F>(count: usize, threads: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    pool.install(|| (0..count).into_par_iter().map(task).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_pool<T, F>(count: usize, _threads: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..count).map(task).collect()
}
