//! Dataset files, configuration, evaluation harness, preference sessions
//! and the HTTP service built on `handover-core`.

pub mod config;
pub mod eval;
pub mod io;
pub mod rollout_view;
pub mod service;
pub mod session;

pub use handover_core as core;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "HANDOVER_THREADS";

/// Size the global rayon pool from `HANDOVER_THREADS` if it is set.
///
/// Returns the resulting thread count. Calling it after the pool exists has
/// no effect.
pub fn configure_threads() -> Result<usize, String> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        if n == 0 {
            return Err(format!("{THREADS_ENV} must be positive"));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
