use crate::error::{config, Result};

/// Caps the worker threads used by parallel stages.
pub const THREADS_ENV: &str = "FEDLAB_THREADS";

/// Thread cap from `FEDLAB_THREADS`; unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => parse_threads(&v).map(Some),
        _ => Ok(None),
    }
}

pub fn parse_threads(v: &str) -> Result<usize> {
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
