use std::hint::black_box;
use std::time::Instant;

pub const DEFAULT_WARMUP: usize = 100;
pub const DEFAULT_REPS: usize = 1000;

/// Per-call wall-clock statistics in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub reps: usize,
}

/// Times `reps` calls of `op` after `warmup` discarded calls. `op` receives
/// the repetition index so callers can cycle through their samples.
pub fn latency_benchmark<T>(
    warmup: usize,
    reps: usize,
    mut op: impl FnMut(usize) -> T,
) -> LatencyStats {
    for i in 0..warmup {
        black_box(op(black_box(i)));
    }
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|i| {
            let start = Instant::now();
            black_box(op(black_box(i)));
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    LatencyStats {
        median_ms: percentile(&times, 0.5),
        p95_ms: percentile(&times, 0.95),
        reps: times.len(),
    }
}

/// Linear interpolation between closest ranks of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
