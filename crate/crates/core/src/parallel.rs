//! Bounded worker pools. Every parallel stage merges results by key, so the
//! pool size never affects output.

use rayon::ThreadPoolBuilder;

/// Runs `f` inside a pool of `jobs` threads (at least one).
pub fn with_jobs<R, F>(jobs: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot build a {jobs}-thread pool ({e}); running on the global pool");
            f()
        }
    }
}
