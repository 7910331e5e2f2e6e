//! Data-parallel fan-out with a sequential fallback.
//!
//! With the `parallel` feature off, [`Execution::Parallel`] quietly runs on the
//! calling thread. Results are collected in input order either way, so every
//! reduction downstream is bitwise reproducible.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Runs `f` inside a pool of at most `threads` workers when parallel.
    pub fn with_threads<R: Send>(self, threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
        match (self, threads) {
            #[cfg(feature = "parallel")]
            (Execution::Parallel, Some(n)) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(f),
                Err(_) => f(),
            },
            _ => f(),
        }
    }
}
