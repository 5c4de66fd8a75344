//! Linear interpolation between policy pairs and the below-threshold proportion.
//!
//! Every point of a profile uses the same perturbation draws (draw `j` comes
//! from `root(seed).child("interp").indexed(j)`), so a profile between identical
//! endpoints is exactly flat and reversing a pair exactly reverses its profile.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{stratified_bootstrap, Estimate};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::Checkpoint;
use crate::par;
use crate::policy::{combine, perturb, ParamVector};
use crate::rng::RngStream;
use crate::rollout::{PolicyReturn, ReturnFn};
use crate::stats::{fsum, mean, std_dev};

pub const DEFAULT_POINTS: usize = 100;
pub const DEFAULT_SIGMA: f64 = 3e-4;
pub const DEFAULT_PERTURB: usize = 16;
pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_PAIRS: usize = 50;
/// Minimum separation, in checkpoint intervals, of same-run pairs.
pub const MIN_CHECKPOINT_GAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpConfig {
    pub n_points: usize,
    pub sigma: f64,
    pub n_perturb: usize,
    pub threshold_frac: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self { n_points: DEFAULT_POINTS, sigma: DEFAULT_SIGMA, n_perturb: DEFAULT_PERTURB, threshold_frac: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationProfile {
    pub pair: (String, String),
    pub same_run: bool,
    pub alphas: Vec<f64>,
    /// Mean post-perturbation return at each point.
    pub returns: Vec<f64>,
    /// Population std over perturbations, present when `n_perturb > 1`.
    pub stds: Option<Vec<f64>>,
    /// Points below the collapse threshold (endpoints are never flagged).
    pub collapse_flags: Vec<bool>,
}

impl InterpolationProfile {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// The same profile traversed from the other end.
    pub fn reversed(&self) -> Self {
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        Self {
            pair: (self.pair.1.clone(), self.pair.0.clone()),
            same_run: self.same_run,
            alphas: self.alphas.clone(),
            returns: rev(&self.returns),
            stds: self.stds.as_deref().map(rev),
            collapse_flags: self.collapse_flags.iter().rev().copied().collect(),
        }
    }
}

fn collapse_threshold(returns: &[f64], threshold_frac: f64) -> f64 {
    threshold_frac * returns[0].min(returns[returns.len() - 1])
}

/// Fraction of interior points whose return falls below
/// `threshold_frac · min(endpoint returns)`. Zero when there are no interior points.
pub fn btp(profile: &InterpolationProfile, threshold_frac: f64) -> f64 {
    let r = &profile.returns;
    if r.len() < 3 {
        return 0.0;
    }
    let thr = collapse_threshold(r, threshold_frac);
    let below = r[1..r.len() - 1].iter().filter(|&&v| v < thr).count();
    below as f64 / (r.len() - 2) as f64
}

/// Point `i` of `n` on the segment from `p1` (i = 0) to `p2` (i = n − 1).
pub fn segment_point(p1: &ParamVector, p2: &ParamVector, i: usize, n: usize) -> Result<ParamVector> {
    let last = n - 1;
    if i == 0 {
        return Ok(p1.clone());
    }
    if i == last {
        return Ok(p2.clone());
    }
    let w2 = i as f64 / last as f64;
    let w1 = (last - i) as f64 / last as f64;
    // coordinates shared by both endpoints stay exact
    let mut out = combine(p1, w1, p2, w2)?;
    for ((o, a), b) in out.values_mut().iter_mut().zip(p1.values()).zip(p2.values()) {
        if a == b {
            *o = *a;
        }
    }
    Ok(out)
}

/// Profile between two parameter vectors under an arbitrary return function.
#[allow(clippy::too_many_arguments)]
pub fn interpolate_with(
    p1: &ParamVector,
    p2: &ParamVector,
    pair: (String, String),
    same_run: bool,
    cfg: &InterpConfig,
    ret: &dyn ReturnFn,
    seed: u64,
) -> Result<InterpolationProfile> {
    if p1.len() != p2.len() || p1.shape_id() != p2.shape_id() {
        return Err(Error::ShapeMismatch(format!(
            "cannot interpolate {} params ({:?}) with {} params ({:?})",
            p1.len(),
            p1.shape_id(),
            p2.len(),
            p2.shape_id()
        )));
    }
    let n = cfg.n_points;
    if n < 2 {
        return Err(Error::InvalidConfig(format!("n_points must be >= 2, got {n}")));
    }
    if cfg.n_perturb == 0 {
        return Err(Error::InvalidConfig("n_perturb must be >= 1".into()));
    }
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma must be finite and >= 0, got {}", cfg.sigma)));
    }
    let m = cfg.n_perturb;
    let stream = RngStream::root(seed).child("interp");
    let raw = par::try_map_indexed(n * m, |k| {
        let theta = segment_point(p1, p2, k / m, n)?;
        let theta = perturb(&theta, cfg.sigma, &mut stream.indexed((k % m) as u64));
        Ok::<_, Error>(ret.evaluate(&theta))
    })?;
    let returns: Vec<f64> = raw.chunks(m).map(mean).collect();
    let stds = (m > 1).then(|| raw.chunks(m).map(std_dev).collect());
    let thr = collapse_threshold(&returns, cfg.threshold_frac);
    let collapse_flags =
        returns.iter().enumerate().map(|(i, &r)| i != 0 && i != n - 1 && r < thr).collect();
    let alphas = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    Ok(InterpolationProfile { pair, same_run, alphas, returns, stds, collapse_flags })
}

/// Profile between two checkpoints of the same network shape.
pub fn interpolate_profile(
    c1: &Checkpoint,
    c2: &Checkpoint,
    cfg: &InterpConfig,
    env: &EnvSpec,
    seed: u64,
) -> Result<InterpolationProfile> {
    if c1.shape != c2.shape {
        return Err(Error::ShapeMismatch(format!("{} vs {}", c1.shape.descriptor(), c2.shape.descriptor())));
    }
    let ret = PolicyReturn::new(env, &c1.shape)?;
    let same_run = c1.seed == c2.seed && c1.env_name == c2.env_name;
    interpolate_with(&c1.actor, &c2.actor, (c1.id(), c2.id()), same_run, cfg, &ret, seed)
}

/// Index pairs into a list of runs (each a step-ordered checkpoint list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndex {
    pub run_a: usize,
    pub ckpt_a: usize,
    pub run_b: usize,
    pub ckpt_b: usize,
}

fn choose<T: Clone>(mut all: Vec<T>, k: usize, rng: &mut RngStream) -> Vec<T> {
    let k = k.min(all.len());
    for i in 0..k {
        let j = i + rng.below(all.len() - i);
        all.swap(i, j);
    }
    all.truncate(k);
    all
}

/// Up to `n` distinct same-run pairs at least `min_gap` checkpoints apart.
pub fn same_run_pairs(run_lens: &[usize], n: usize, min_gap: usize, rng: &mut RngStream) -> Vec<PairIndex> {
    let mut all = Vec::new();
    for (r, &len) in run_lens.iter().enumerate() {
        for a in 0..len {
            for b in a + min_gap.max(1)..len {
                all.push(PairIndex { run_a: r, ckpt_a: a, run_b: r, ckpt_b: b });
            }
        }
    }
    choose(all, n, rng)
}

/// Up to `n` distinct pairs whose endpoints come from different runs.
pub fn cross_run_pairs(run_lens: &[usize], n: usize, rng: &mut RngStream) -> Vec<PairIndex> {
    let mut all = Vec::new();
    for (ra, &la) in run_lens.iter().enumerate() {
        for (rb, &lb) in run_lens.iter().enumerate().skip(ra + 1) {
            for a in 0..la {
                for b in 0..lb {
                    all.push(PairIndex { run_a: ra, ckpt_a: a, run_b: rb, ckpt_b: b });
                }
            }
        }
    }
    choose(all, n, rng)
}

/// Per-pair BTP values of one environment, split by condition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvBtp {
    pub same_run: Vec<f64>,
    pub diff_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtpReport {
    /// Mean BTP per environment: (same run, different runs).
    pub per_env: BTreeMap<String, (f64, f64)>,
    pub same_run: Estimate,
    pub diff_run: Estimate,
    pub n_boot: usize,
}

/// Stratified bootstrap over environments for both conditions.
pub fn aggregate_btp(per_env: &BTreeMap<String, EnvBtp>, n_boot: usize, seed: u64) -> Result<BtpReport> {
    if per_env.is_empty() {
        return Err(Error::Empty("environment list"));
    }
    let same: Vec<Vec<f64>> = per_env.values().map(|e| e.same_run.clone()).collect();
    let diff: Vec<Vec<f64>> = per_env.values().map(|e| e.diff_run.clone()).collect();
    let root = RngStream::root(seed).child("btp-bootstrap");
    let same_run = stratified_bootstrap(&same, n_boot, &mut root.child("same"))?;
    let diff_run = stratified_bootstrap(&diff, n_boot, &mut root.child("diff"))?;
    let m = |v: &[f64]| fsum(v.iter().copied()) / v.len() as f64;
    let per_env = per_env.iter().map(|(k, e)| (k.clone(), (m(&e.same_run), m(&e.diff_run)))).collect();
    Ok(BtpReport { per_env, same_run, diff_run, n_boot })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(returns: Vec<f64>) -> InterpolationProfile {
        let n = returns.len();
        InterpolationProfile {
            pair: ("a".into(), "b".into()),
            same_run: true,
            alphas: (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
            returns,
            stds: None,
            collapse_flags: vec![false; n],
        }
    }

    fn valley(p: &ParamVector) -> f64 {
        let x = p.values()[0];
        100.0 - 400.0 * (0.25 - (x - 0.5).powi(2)).max(0.0)
    }

    #[test]
    fn btp_examples() {
        assert_eq!(btp(&profile(vec![100.0, 5.0, 100.0]), 0.1), 1.0);
        assert_eq!(btp(&profile(vec![10.0, 20.0, 30.0, 40.0]), 0.1), 0.0);
        assert_eq!(btp(&profile(vec![10.0, 40.0]), 0.1), 0.0);
        let p = profile(vec![8.0, 0.5, 3.0, 0.7, 10.0]);
        assert_eq!(btp(&p, 0.1), 2.0 / 3.0);
        assert_eq!(btp(&p.reversed(), 0.1), 2.0 / 3.0);
    }

    #[test]
    fn identical_endpoints_flat_profile() {
        let p = ParamVector::flat(vec![0.3, -0.2]);
        let f = |q: &ParamVector| q.values().iter().map(|v| v.sin()).sum::<f64>();
        let cfg = InterpConfig { n_points: 11, sigma: 0.1, n_perturb: 8, threshold_frac: 0.1 };
        let prof = interpolate_with(&p, &p, ("a".into(), "a".into()), true, &cfg, &f, 3).unwrap();
        assert!(prof.returns.iter().all(|r| r.to_bits() == prof.returns[0].to_bits()));
        assert_eq!(prof.stds.as_ref().unwrap().len(), 11);
    }

    #[test]
    fn valley_detected_at_midpoint() {
        let a = ParamVector::flat(vec![0.0]);
        let b = ParamVector::flat(vec![1.0]);
        let cfg = InterpConfig { n_points: 21, sigma: 0.0, n_perturb: 1, threshold_frac: 0.1 };
        let prof = interpolate_with(&a, &b, ("a".into(), "b".into()), false, &cfg, &valley, 0).unwrap();
        let imin = (0..21).min_by(|&i, &j| prof.returns[i].total_cmp(&prof.returns[j])).unwrap();
        assert_eq!(prof.alphas[imin], 0.5);
        assert!(prof.stds.is_none());
        assert!(btp(&prof, 0.1) > 0.0);
        let rev = interpolate_with(&b, &a, ("b".into(), "a".into()), false, &cfg, &valley, 0).unwrap();
        assert_eq!(rev, prof.reversed());
    }

    #[test]
    fn pair_sampling_respects_gap() {
        let mut rng = RngStream::root(1);
        let pairs = same_run_pairs(&[10, 10], 500, 2, &mut rng);
        assert_eq!(pairs.len(), 2 * 36);
        assert!(pairs.iter().all(|p| p.run_a == p.run_b && p.ckpt_b >= p.ckpt_a + 2));
        let cross = cross_run_pairs(&[3, 4, 5], 10, &mut rng);
        assert_eq!(cross.len(), 10);
        assert!(cross.iter().all(|p| p.run_a < p.run_b));
    }

    #[test]
    fn aggregate_examples() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), EnvBtp { same_run: vec![0.0; 4], diff_run: vec![0.0; 4] });
        m.insert("b".to_string(), EnvBtp { same_run: vec![1.0; 4], diff_run: vec![0.0; 4] });
        let r = aggregate_btp(&m, 200, 0).unwrap();
        assert_eq!(r.same_run.point, 0.5);
        assert_eq!((r.diff_run.point, r.diff_run.ci_lo, r.diff_run.ci_hi), (0.0, 0.0, 0.0));
        assert_eq!(r.per_env["b"], (1.0, 0.0));
        m.insert("c".to_string(), EnvBtp { same_run: vec![], diff_run: vec![0.0] });
        assert!(aggregate_btp(&m, 10, 0).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = InterpConfig::default();
        let f = |_: &ParamVector| 0.0;
        let r = interpolate_with(&ParamVector::flat(vec![0.0]), &ParamVector::flat(vec![0.0, 1.0]), ("a".into(), "b".into()), true, &cfg, &f, 0);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }
}
