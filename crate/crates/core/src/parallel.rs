//! Scoped worker fan-out with deterministic reassembly.

use std::num::NonZeroUsize;

/// Environment variable capping worker threads for scans and batch encoding.
pub const THREADS_ENV: &str = "HASHSCREEN_THREADS";

/// Rows per worker below which splitting is not worth a thread.
const MIN_ROWS_PER_WORKER: usize = 64;

pub fn max_threads() -> usize {
    let available = std::thread::available_parallelism()
        .map(NonZeroUsize::get)
        .unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => available,
    }
}

/// Splits `out` (rows of `width` values) into contiguous chunks and calls
/// `f(first_row, chunk)` for each, possibly on several threads. Each row is
/// written by exactly one call, so results do not depend on the split.
pub fn for_each_row_chunk<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    if width == 0 || out.is_empty() {
        return;
    }
    let rows = out.len() / width;
    let workers = max_threads().min(rows / MIN_ROWS_PER_WORKER).max(1);
    if workers == 1 {
        f(0, out);
        return;
    }
    let per = rows.div_ceil(workers);
    std::thread::scope(|s| {
        for (i, chunk) in out.chunks_mut(per * width).enumerate() {
            let f = &f;
            s.spawn(move || f(i * per, chunk));
        }
    });
}

/// Even split of `0..len` into `parts` contiguous ranges (some may be empty).
pub fn partition_ranges(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.max(1);
    (0..parts)
        .map(|p| (len * p / parts)..(len * (p + 1) / parts))
        .collect()
}
