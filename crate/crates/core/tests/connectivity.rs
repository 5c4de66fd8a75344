use std::collections::BTreeMap;

use return_landscape::connectivity::{aggregate_btp, btp, interpolate_with, EnvBtp, InterpConfig};
use return_landscape::policy::ParamVector;
use return_landscape::rng::RngStream;

const DIM: usize = 6;
const RADIUS: f64 = 1.0;
const HEIGHT: f64 = 100.0;

fn centres() -> [Vec<f64>; 2] {
    let mut b = vec![0.0; DIM];
    b[0] = 10.0 * RADIUS;
    [vec![0.0; DIM], b]
}

/// Two disjoint concave bowls of height 100 and radius 1, ten radii apart.
fn two_basins(p: &ParamVector) -> f64 {
    centres()
        .iter()
        .map(|c| {
            let d2: f64 = p.values().iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
            HEIGHT * (1.0 - d2 / (RADIUS * RADIUS)).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Uniform-ish point within half a radius of basin `b`.
fn member(b: usize, rng: &mut RngStream) -> ParamVector {
    let c = &centres()[b];
    let dir: Vec<f64> = (0..DIM).map(|_| rng.normal()).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = 0.5 * RADIUS * rng.uniform();
    ParamVector::flat(c.iter().zip(&dir).map(|(c, d)| c + r * d / norm).collect())
}

fn pair_btps(cross: bool, n: usize, seed: u64) -> Vec<f64> {
    let cfg = InterpConfig::default();
    let mut rng = RngStream::root(seed);
    (0..n)
        .map(|k| {
            let a = member(0, &mut rng);
            let b = member(if cross { 1 } else { k % 2 }, &mut rng);
            let a = if !cross && k % 2 == 1 { member(1, &mut rng) } else { a };
            let prof = interpolate_with(&a, &b, ("a".into(), "b".into()), !cross, &cfg, &two_basins, k as u64).unwrap();
            btp(&prof, cfg.threshold_frac)
        })
        .collect()
}

#[test]
fn same_basin_pairs_never_collapse() {
    assert!(pair_btps(false, 20, 1).iter().all(|b| *b == 0.0));
}

#[test]
fn cross_basin_pairs_mostly_collapse() {
    for v in pair_btps(true, 20, 2) {
        assert!(v > 0.5, "{v}");
    }
}

#[test]
fn aggregate_separates_the_conditions() {
    let mut per_env = BTreeMap::new();
    per_env.insert("two-basin".to_string(), EnvBtp { same_run: pair_btps(false, 20, 3), diff_run: pair_btps(true, 20, 4) });
    let rep = aggregate_btp(&per_env, 500, 0).unwrap();
    assert_eq!(rep.same_run.point, 0.0);
    assert_eq!((rep.same_run.ci_lo, rep.same_run.ci_hi), (0.0, 0.0));
    assert!(rep.diff_run.point > 0.5);
    assert!(rep.diff_run.ci_lo > 0.5);
    let again = aggregate_btp(&per_env, 500, 0).unwrap();
    assert_eq!(rep, again);
}

#[test]
fn profile_endpoints_are_exact_without_noise() {
    let cfg = InterpConfig { sigma: 0.0, n_perturb: 1, ..InterpConfig::default() };
    let mut rng = RngStream::root(5);
    let (a, b) = (member(0, &mut rng), member(1, &mut rng));
    let prof = interpolate_with(&a, &b, ("a".into(), "b".into()), false, &cfg, &two_basins, 0).unwrap();
    assert_eq!(prof.returns[0], two_basins(&a));
    assert_eq!(*prof.returns.last().unwrap(), two_basins(&b));
    assert!(prof.stds.is_none());
    assert!(!prof.collapse_flags[0] && !prof.collapse_flags[cfg.n_points - 1]);
}
