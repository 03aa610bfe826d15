//! Order-preserving fan-out over independent work items.
//!
//! With the `parallel` feature, [`Parallelism::Threads`] runs on a dedicated rayon pool.
//! Without it every call runs sequentially. Results always come back in input order, so
//! reductions performed by the caller are identical either way.

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "HCA_SEQREC_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Worker count; `0` lets rayon pick one per core.
    Threads(usize),
}

impl Parallelism {
    /// Reads [`THREADS_ENV`]; unset or unparsable means one thread.
    pub fn from_env() -> Self {
        match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            None | Some(1) => Parallelism::Sequential,
            Some(n) => Parallelism::Threads(n),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Parallelism::Sequential | Parallelism::Threads(1))
    }
}

/// Maps `f` over `items`, preserving order.
pub fn par_map<T, R, F>(items: &[T], par: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if let Parallelism::Threads(n) = par {
        if n != 1 {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => log::warn!("falling back to sequential execution: {e}"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = par;
    items.iter().map(f).collect()
}
