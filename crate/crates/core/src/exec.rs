//! Fan-out helper shared by profiling, classification and the pipeline.
//!
//! Results always come back in input order, so callers can merge them
//! without caring which worker finished first. With the `parallel` feature
//! off, [`Executor`] only has the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs independent jobs either on the calling thread or on a bounded
/// rayon pool.
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    max_inflight: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("parallel", &self.is_parallel())
            .field("max_inflight", &self.max_inflight)
            .finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            #[cfg(feature = "parallel")]
            pool: None,
            max_inflight: 1,
        }
    }

    /// A pool of `max_inflight` workers. Falls back to sequential when
    /// `max_inflight <= 1` or the pool cannot be built.
    #[cfg(feature = "parallel")]
    pub fn parallel(max_inflight: usize) -> Self {
        if max_inflight <= 1 {
            return Self::sequential();
        }
        match rayon::ThreadPoolBuilder::new()
            .num_threads(max_inflight)
            .thread_name(|i| format!("dbdesc-worker-{i}"))
            .build()
        {
            Ok(pool) => Executor {
                pool: Some(pool),
                max_inflight,
            },
            Err(err) => {
                log::warn!("could not start worker pool ({err}); running sequentially");
                Self::sequential()
            }
        }
    }

    /// Picks the parallel executor when the feature is compiled in.
    pub fn with_max_inflight(max_inflight: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            Self::parallel(max_inflight)
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = max_inflight;
            Self::sequential()
        }
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

    pub fn max_inflight(&self) -> usize {
        self.max_inflight
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Like [`Executor::map`] but gives each worker its own state, built
    /// lazily with `init`. Used to hand every worker a private database
    /// connection.
    pub fn map_init<T, S, R, I, F>(&self, items: &[T], init: I, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, &T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map_init(&init, &f).collect());
        }
        let mut state = init();
        items.iter().map(|item| f(&mut state, item)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_preserves_order() {
        let exec = Executor::sequential();
        let out = exec.map(&[3, 1, 2], |x| x * 10);
        assert_eq!(out, vec![30, 10, 20]);
        assert!(!exec.is_parallel());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_preserves_order() {
        let exec = Executor::parallel(4);
        assert!(exec.is_parallel());
        let items: Vec<u64> = (0..1000).collect();
        let out = exec.map(&items, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_with_one_worker_is_sequential() {
        assert!(!Executor::parallel(1).is_parallel());
    }

    #[test]
    fn map_init_builds_state_once_sequentially() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let inits = AtomicUsize::new(0);
        let exec = Executor::sequential();
        let out = exec.map_init(
            &[1, 2, 3],
            || {
                inits.fetch_add(1, Ordering::SeqCst);
                0usize
            },
            |seen, x| {
                *seen += 1;
                (*seen, *x)
            },
        );
        assert_eq!(out, vec![(1, 1), (2, 2), (3, 3)]);
        assert_eq!(inits.load(Ordering::SeqCst), 1);
    }
}
