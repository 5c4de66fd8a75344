use proptest::prelude::*;
use return_landscape::rng::RngStream;
use return_landscape::stats::{cvar, ltp, mean, mode, skewness, std_dev};

/// Straight-line histogram: a sample lands in the last bin whose left edge
/// `lo + k·(hi − lo)/100` it reaches; the first strictly largest count wins.
fn mode_oracle(xs: &[f64]) -> f64 {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return lo;
    }
    let w = (hi - lo) / 100.0;
    let mut counts = vec![0usize; 100];
    for &x in xs {
        let b = (1..100).filter(|k| x - lo >= *k as f64 * w).count();
        counts[b] += 1;
    }
    let best = (0..100).fold(0, |best, i| if counts[i] > counts[best] { i } else { best });
    lo + (best as f64 + 0.5) * w
}

fn ltp_oracle(xs: &[f64], alpha: f64, lb: f64) -> Option<f64> {
    let m = mode_oracle(xs);
    if m <= lb || m <= 0.0 {
        return None;
    }
    let mut hits = 0;
    for &x in xs {
        if lb <= x && x < alpha * m {
            hits += 1;
        }
    }
    Some(hits as f64 / xs.len() as f64)
}

fn cvar_oracle(xs: &[f64], alpha: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((alpha * v.len() as f64).floor() as usize).max(1);
    let tail = &v[..k];
    exact_sum(tail) / k as f64
}

/// Exact sum by accumulating in i128 fixed point; inputs are multiples of 2^-20.
fn exact_sum(xs: &[f64]) -> f64 {
    let scale = (1u64 << 20) as f64;
    let total: i128 = xs.iter().map(|x| (x * scale) as i128).sum();
    total as f64 / scale
}

/// A randomized sample set on a 2^-20 grid so sums are exact.
fn sample_set(k: u64) -> Vec<f64> {
    let mut rng = RngStream::root(2024).indexed(k);
    let n = 5 + rng.below(1996);
    let bimodal = k % 3 == 0;
    (0..n)
        .map(|_| {
            let base = if bimodal && rng.uniform() < 0.2 { 20.0 } else { 300.0 };
            let x = base + 40.0 * rng.normal();
            (x * 1048576.0).round() / 1048576.0
        })
        .collect()
}

#[test]
fn estimators_match_oracles_on_random_sets() {
    for k in 0..50 {
        let xs = sample_set(k);
        assert!((5..=2000).contains(&xs.len()));
        assert_eq!(mode(&xs), mode_oracle(&xs), "mode, set {k}");
        for alpha in [0.1, 0.5, 0.9] {
            assert_eq!(ltp(&xs, alpha, 0.0), ltp_oracle(&xs, alpha, 0.0), "ltp, set {k}");
        }
        for alpha in [0.01, 0.1, 0.25, 1.0] {
            assert_eq!(cvar(&xs, alpha), cvar_oracle(&xs, alpha), "cvar, set {k}");
        }
    }
}

#[test]
fn closed_form_moments() {
    let a = [-1.0, 0.0, 1.0];
    assert!((std_dev(&a) - (2.0f64 / 3.0).sqrt()).abs() <= 1e-12);
    assert!(skewness(&a).abs() <= 1e-12);
    // m2 = 3/16, m3 = 3/32 → g1 = (3/32) / (3/16)^1.5 = 2/√3
    let b = [0.0, 0.0, 0.0, 1.0];
    assert!((std_dev(&b) - 3f64.sqrt() / 4.0).abs() <= 1e-12);
    assert!((skewness(&b) - 2.0 / 3f64.sqrt()).abs() <= 1e-12);
}

#[test]
fn constant_sample_edge_cases() {
    let c = [4.0; 7];
    assert_eq!(mode(&c), 4.0);
    assert_eq!(skewness(&c), 0.0);
    assert_eq!(ltp(&c, 0.5, 0.0), Some(0.0));
    assert_eq!(ltp(&[-3.0; 4], 0.5, -10.0), None);
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4096i32..4096, 2..300).prop_map(|v| v.into_iter().map(|i| i as f64 / 8.0).collect())
}

proptest! {
    #[test]
    fn cvar_is_monotone_in_alpha(xs in samples(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cvar(&xs, lo) <= cvar(&xs, hi));
        prop_assert_eq!(cvar(&xs, 1.0), mean(&xs));
    }

    #[test]
    fn ltp_is_scale_invariant(xs in samples(), p in -6i32..6, alpha in 0.05f64..0.95) {
        let k = 2f64.powi(p);
        let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
        prop_assert_eq!(ltp(&scaled, alpha, -512.0 * k), ltp(&xs, alpha, -512.0));
    }

    #[test]
    fn mode_is_shift_equivariant(xs in samples(), c in -1000i32..1000) {
        let c = c as f64;
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((mode(&shifted) - (mode(&xs) + c)).abs() <= 1e-9 * (1.0 + c.abs() + hi - lo));
    }
}
