//! Ordered data-parallel map.
//!
//! Results always come back in input order, so any reduction done afterwards
//! on the caller's thread sees the same sequence whatever the thread count.
//! Without the `parallel` feature every policy runs on the calling thread.

use crate::error::{NtkError, Result};

/// Worker-count environment variable.
pub const THREADS_ENV: &str = "NTK_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `None` lets rayon pick (one worker per core).
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { threads: None }
    }
}

impl Execution {
    /// Reads `NTK_THREADS`; unset means the default pool.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(raw) => Self::parse_threads(&raw),
            Err(std::env::VarError::NotPresent) => Ok(Self::default()),
            Err(e) => Err(NtkError::Contract(format!("{THREADS_ENV}: {e}"))),
        }
    }

    pub fn parse_threads(raw: &str) -> Result<Self> {
        match raw.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(NtkError::Contract(format!(
                "{THREADS_ENV} must be a positive integer, got {raw:?}"
            ))),
            Ok(1) => Ok(Execution::Sequential),
            Ok(t) => Ok(Execution::Parallel { threads: Some(t) }),
        }
    }

    /// `f` applied to every item, in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel { threads } => parallel_map(threads, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(threads: Option<usize>, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let run = || items.par_iter().map(&f).collect();
    match threads {
        None => run(),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {t}-thread pool ({e}); using the global pool");
                run()
            }
        },
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(_threads: Option<usize>, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
