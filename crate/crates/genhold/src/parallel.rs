//! Replications on a rayon pool.
//!
//! Outcomes are collected in replication order and each one depends only on
//! `(config, rep_index)`, so the thread count never changes any output.

use genhold_core::sim::{ExperimentConfig, ReplicationOutcome, run_replication};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub const THREADS_ENV: &str = "GH_THREADS";

/// `--threads` if given, else `GH_THREADS`, else `None` (one per core).
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("{THREADS_ENV}={v:?} is not a thread count")),
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool with `threads` workers (`None` or 0: rayon's default).
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(f)
}

pub fn run_replications(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> genhold_core::Result<Vec<ReplicationOutcome>> {
    config.validate()?;
    with_pool(threads, || {
        (0..config.replications)
            .into_par_iter()
            .map(|r| run_replication(config, r))
            .collect()
    })
}

/// SHA-256 over the replication transcript digests, in replication order.
pub fn combined_digest(outcomes: &[ReplicationOutcome]) -> [u8; 32] {
    let mut h = Sha256::new();
    for o in outcomes {
        h.update(o.transcript_digest);
    }
    h.finalize().into()
}
