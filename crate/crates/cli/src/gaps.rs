//! Missing-data masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Where and how long the removed segments are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    pub gap_ms: f64,
    pub n_gaps: usize,
    /// Distance kept free of gaps at both ends of the signal.
    pub guard_ms: f64,
    pub seed: u64,
}

/// Samples per gap, `round(gap_ms · rate / 1000)`.
pub fn gap_samples(gap_ms: f64, sample_rate: f64) -> usize {
    (gap_ms * sample_rate / 1000.0).round() as usize
}

/// A mask with `n_gaps` disjoint runs of equal length, placed uniformly at
/// random inside the guard margins. `true` marks a missing sample.
pub fn make_gaps(len: usize, sample_rate: f64, spec: &GapSpec) -> Result<Vec<bool>> {
    if !(spec.gap_ms >= 0.0 && spec.guard_ms >= 0.0) {
        return Err(CliError::Data("gap and guard durations must be non-negative".into()));
    }
    let run = gap_samples(spec.gap_ms, sample_rate);
    let mut mask = vec![false; len];
    if run == 0 || spec.n_gaps == 0 {
        return Ok(mask);
    }
    let total = run * spec.n_gaps;
    if 2 * total >= len {
        return Err(CliError::Data(format!(
            "{} gaps of {run} samples cover at least half of {len} samples",
            spec.n_gaps
        )));
    }
    let guard = gap_samples(spec.guard_ms, sample_rate);
    // Runs are separated by at least one observed sample.
    let needed = 2 * guard + total + spec.n_gaps - 1;
    if needed > len {
        return Err(CliError::Data(format!(
            "{} gaps of {run} samples with {guard}-sample guards do not fit in {len} samples",
            spec.n_gaps
        )));
    }
    let slack = len - needed;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut offsets: Vec<usize> = (0..spec.n_gaps).map(|_| rng.gen_range(0..=slack)).collect();
    offsets.sort_unstable();
    for (i, off) in offsets.into_iter().enumerate() {
        let start = guard + off + i * (run + 1);
        mask[start..start + run].fill(true);
    }
    Ok(mask)
}
