//! Data-parallel dispatch. With the `parallel` feature the maps below run on
//! a caller-provided rayon pool; without it they fall back to sequential
//! iteration. Results are collected in input order either way, so outputs
//! are identical across modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Handle to the execution mode chosen for a run.
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `threads == 1` (or a build without the `parallel` feature) runs
    /// everything sequentially.
    pub fn new(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = if threads > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build()
                        .expect("failed to build thread pool"),
                )
            } else {
                None
            };
            Executor { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Executor {}
        }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.into_par_iter().map(f).collect());
        }
        items.into_iter().map(f).collect()
    }

    /// Map a fallible `f` over `items`, short-circuiting on the first error
    /// in the sequential case and returning the lowest-index error under
    /// rayon (collect into `Result<Vec<_>>` preserves determinism of the Ok
    /// path; any error aborts the run either way).
    pub fn try_map<T, R, E, F>(&self, items: Vec<T>, f: F) -> Result<Vec<R>, E>
    where
        T: Send,
        R: Send,
        E: Send,
        F: Fn(T) -> Result<R, E> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.into_par_iter().map(f).collect());
        }
        items.into_iter().map(f).collect()
    }
}
