//! Distributional statistics of return samples.
//!
//! Sums go through [`fsum`], which is exactly rounded and therefore
//! independent of summation order: `cvar(x, 1.0)` and `mean(x)` agree
//! bit-for-bit even though one sums sorted values.

use serde::{Deserialize, Serialize};

use crate::bootstrap::percentile;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Number of equal-width bins used by the mode estimator.
pub const MODE_BINS: usize = 100;

/// Exactly rounded floating-point sum (Shewchuk's partials algorithm).
pub fn fsum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round-half-even correction as in CPython's math.fsum
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

pub fn mean(xs: &[f64]) -> f64 {
    fsum(xs.iter().copied()) / xs.len() as f64
}

/// Population central moments `(m2, m3)` about the mean.
fn central_moments(xs: &[f64], mu: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let m2 = fsum(xs.iter().map(|x| (x - mu) * (x - mu))) / n;
    let m3 = fsum(xs.iter().map(|x| (x - mu) * (x - mu) * (x - mu))) / n;
    (m2, m3)
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let (m2, _) = central_moments(xs, mean(xs));
    m2.sqrt()
}

/// Fisher–Pearson coefficient `g1 = m3 / m2^{3/2}`; 0 for constant samples.
pub fn skewness(xs: &[f64]) -> f64 {
    let (m2, m3) = central_moments(xs, mean(xs));
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Histogram mode: midpoint of the most populated of 100 equal-width bins
/// spanning `[min, max]` (last bin closed on the right, ties to the lowest bin).
///
/// Panics on an empty slice.
pub fn mode(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "mode of empty sample");
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return lo;
    }
    let width = (hi - lo) / MODE_BINS as f64;
    let mut counts = [0usize; MODE_BINS];
    for &x in xs {
        let b = ((x - lo) / width).floor() as usize;
        counts[b.min(MODE_BINS - 1)] += 1;
    }
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    lo + (best as f64 + 0.5) * width
}

/// Left-tail probability: fraction of samples in `[lower_bound, alpha·mode)`.
///
/// `None` when the mode does not exceed `lower_bound`, or is not positive:
/// `alpha·mode` only marks a drop from the mode when the mode is positive.
pub fn ltp(xs: &[f64], alpha: f64, lower_bound: f64) -> Option<f64> {
    ltp_with_mode(xs, alpha, lower_bound, mode(xs))
}

pub fn ltp_with_mode(xs: &[f64], alpha: f64, lower_bound: f64, mode: f64) -> Option<f64> {
    if mode <= lower_bound || mode <= 0.0 {
        return None;
    }
    let threshold = alpha * mode;
    let count = xs.iter().filter(|&&y| y >= lower_bound && y < threshold).count();
    Some(count as f64 / xs.len() as f64)
}

/// Mean of the `max(1, floor(alpha·N))` smallest samples.
pub fn cvar(xs: &[f64], alpha: f64) -> f64 {
    assert!(!xs.is_empty(), "cvar of empty sample");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((alpha * xs.len() as f64).floor() as usize).clamp(1, xs.len());
    fsum(sorted[..k].iter().copied()) / k as f64
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: xs.len() });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxy = fsum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let sxx = fsum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let syy = fsum(ys.iter().map(|y| (y - my) * (y - my)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-metric bootstrap summary over resamples of the raw returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n_boot: usize,
    pub mean_ci: (f64, f64),
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    /// Mean over resamples where LTP is defined; `None` if it never is.
    pub ltp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub mode: f64,
    pub ltp_alpha: f64,
    pub ltp: Option<f64>,
    pub cvar_alpha: f64,
    pub cvar: f64,
    pub bootstrap: Option<BootstrapSummary>,
}

/// Parameters for [`stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsConfig {
    pub ltp_alpha: f64,
    pub cvar_alpha: f64,
    pub lower_bound: f64,
    /// 0 disables the bootstrap.
    pub n_boot: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { ltp_alpha: 0.5, cvar_alpha: 0.1, lower_bound: 0.0, n_boot: 1000 }
    }
}

pub fn stats(xs: &[f64], cfg: &StatsConfig, rng: &mut RngStream) -> Result<DistStats> {
    if xs.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: xs.len() });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("return samples"));
    }
    let mu = mean(xs);
    let (m2, m3) = central_moments(xs, mu);
    let md = mode(xs);
    let bootstrap = (cfg.n_boot > 0).then(|| bootstrap_summary(xs, cfg, rng));
    Ok(DistStats {
        n: xs.len(),
        mean: mu,
        std: m2.sqrt(),
        skewness: if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) },
        mode: md,
        ltp_alpha: cfg.ltp_alpha,
        ltp: ltp_with_mode(xs, cfg.ltp_alpha, cfg.lower_bound, md),
        cvar_alpha: cfg.cvar_alpha,
        cvar: cvar(xs, cfg.cvar_alpha),
        bootstrap,
    })
}

fn bootstrap_summary(xs: &[f64], cfg: &StatsConfig, rng: &mut RngStream) -> BootstrapSummary {
    let n = xs.len();
    let mut means = Vec::with_capacity(cfg.n_boot);
    let mut stds = Vec::with_capacity(cfg.n_boot);
    let mut skews = Vec::with_capacity(cfg.n_boot);
    let mut ltps = Vec::new();
    let mut resample = vec![0.0; n];
    for _ in 0..cfg.n_boot {
        for slot in resample.iter_mut() {
            *slot = xs[rng.below(n)];
        }
        let mu = mean(&resample);
        let (m2, m3) = central_moments(&resample, mu);
        means.push(mu);
        stds.push(m2.sqrt());
        skews.push(if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) });
        if let Some(l) = ltp(&resample, cfg.ltp_alpha, cfg.lower_bound) {
            ltps.push(l);
        }
    }
    let mut sorted = means.clone();
    sorted.sort_by(f64::total_cmp);
    BootstrapSummary {
        n_boot: cfg.n_boot,
        mean_ci: (percentile(&sorted, 2.5), percentile(&sorted, 97.5)),
        mean: mean(&means),
        std: mean(&stds),
        skewness: mean(&skews),
        ltp: (!ltps.is_empty()).then(|| mean(&ltps)),
    }
}
