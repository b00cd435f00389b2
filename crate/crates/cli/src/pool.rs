use modalmeta_core::meta::Executor;
use rayon::prelude::*;

use crate::error::{AppError, AppResult};

pub const THREADS_VAR: &str = "MODALMETA_THREADS";

/// Runs per-task jobs on a rayon pool. Results come back in index order.
pub struct Pool(rayon::ThreadPool);

impl Pool {
    pub fn new(threads: usize) -> AppResult<Pool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(Pool)
            .map_err(|e| AppError::Usage(e.to_string()))
    }

    /// Sized by `MODALMETA_THREADS` when set, otherwise by rayon's default.
    pub fn from_env() -> AppResult<Pool> {
        match std::env::var(THREADS_VAR) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Pool::new(n),
                _ => Err(AppError::Usage(format!(
                    "{THREADS_VAR} must be a positive integer, got {v:?}"
                ))),
            },
            Err(_) => Pool::new(0),
        }
    }

    pub fn threads(&self) -> usize {
        self.0.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<R, F>(&self, n: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        let job = &job;
        self.0.install(|| (0..n).into_par_iter().map(job).collect())
    }
}
