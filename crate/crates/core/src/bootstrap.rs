//! Percentile and stratified bootstrap helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::fsum;

/// Linear-interpolation percentile (`q` in [0, 100]) of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() || frac == 0.0 {
        sorted[i]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// A point estimate with a 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Mean over strata of each stratum's mean, with a stratified bootstrap CI:
/// each replicate resamples values within every stratum independently.
pub fn stratified_bootstrap(strata: &[Vec<f64>], n_boot: usize, rng: &mut RngStream) -> Result<Estimate> {
    if strata.is_empty() || strata.iter().any(Vec::is_empty) {
        return Err(Error::Empty("bootstrap stratum"));
    }
    let k = strata.len() as f64;
    let stratum_mean = |v: &[f64]| fsum(v.iter().copied()) / v.len() as f64;
    let point = fsum(strata.iter().map(|s| stratum_mean(s))) / k;
    if n_boot == 0 {
        return Ok(Estimate { point, ci_lo: point, ci_hi: point });
    }
    let mut reps = Vec::with_capacity(n_boot);
    let mut buf = Vec::new();
    for _ in 0..n_boot {
        let mut means = Vec::with_capacity(strata.len());
        for s in strata {
            buf.clear();
            buf.extend((0..s.len()).map(|_| s[rng.below(s.len())]));
            means.push(stratum_mean(&buf));
        }
        reps.push(fsum(means) / k);
    }
    reps.sort_by(f64::total_cmp);
    Ok(Estimate { point, ci_lo: percentile(&reps, 2.5), ci_hi: percentile(&reps, 97.5) })
}
