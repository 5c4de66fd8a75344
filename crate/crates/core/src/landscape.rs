//! Two-dimensional slices of the return landscape.
//!
//! A slice is spanned by two sampled updates θ′ and θ″ of an origin θ0:
//! `θ(a, b) = θ0 + a·(θ′ − θ0) + b·(θ″ − θ0)`, so coordinate 1 on an axis is
//! one full update in that direction.

use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{sample_update, Checkpoint, UpdateFamily};
use crate::par;
use crate::policy::{MlpShape, ParamVector};
use crate::purd::update_source;
use crate::rng::RngStream;
use crate::rollout::{PolicyReturn, ReturnFn};

pub const DEFAULT_GRID_RES: usize = 41;
pub const DEFAULT_RANGE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub origin: ParamVector,
    /// θ′ and θ″, the slice endpoints at coordinates (1, 0) and (0, 1).
    pub endpoints: [ParamVector; 2],
    pub dir1: ParamVector,
    pub dir2: ParamVector,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Row-major: `returns[i * betas.len() + j]` is the return at `(alphas[i], betas[j])`.
    pub returns: Vec<f64>,
    /// Half-width of the square window centred on the origin.
    pub range: f64,
    /// Set when a direction is identically zero.
    pub degenerate: [bool; 2],
}

/// Row of an exported grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "return")]
    pub value: f64,
}

impl LandscapeGrid {
    pub fn grid_res(&self) -> usize {
        self.alphas.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.returns[i * self.betas.len() + j]
    }

    /// Return at exact coordinates, if they lie on the grid.
    pub fn at(&self, alpha: f64, beta: f64) -> Option<f64> {
        let i = self.alphas.iter().position(|a| a.to_bits() == alpha.to_bits())?;
        let j = self.betas.iter().position(|b| b.to_bits() == beta.to_bits())?;
        Some(self.get(i, j))
    }

    pub fn cells(&self) -> Vec<GridCell> {
        let nb = self.betas.len();
        self.returns
            .iter()
            .enumerate()
            .map(|(k, &value)| GridCell { alpha: self.alphas[k / nb], beta: self.betas[k % nb], value })
            .collect()
    }

    /// Parameters at slice coordinates `(a, b)`.
    pub fn point(&self, a: f64, b: f64) -> Result<ParamVector> {
        slice_point(&self.origin, &self.endpoints, &self.dir1, &self.dir2, a, b)
    }

    /// Value range `max − min` over the grid.
    pub fn spread(&self) -> f64 {
        let lo = self.returns.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// Indices of the largest cell, first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.returns.iter().enumerate() {
            if v > self.returns[best] {
                best = k;
            }
        }
        (best / self.betas.len(), best % self.betas.len())
    }
}

/// `res` evenly spaced coordinates on `[-range, range]`.
///
/// Computed as `range·(2i − (res−1)) / (res−1)`, which is exact at 0 and
/// makes windows that differ by a power of two share coordinates bitwise.
pub fn axis(res: usize, range: f64) -> Vec<f64> {
    let m = (res - 1) as f64;
    (0..res).map(|i| range * (2.0 * i as f64 - m) / m).collect()
}

fn slice_point(
    origin: &ParamVector,
    ends: &[ParamVector; 2],
    d1: &ParamVector,
    d2: &ParamVector,
    a: f64,
    b: f64,
) -> Result<ParamVector> {
    match (a, b) {
        (a, b) if a == 0.0 && b == 0.0 => Ok(origin.clone()),
        (a, b) if a == 1.0 && b == 0.0 => Ok(ends[0].clone()),
        (a, b) if a == 0.0 && b == 1.0 => Ok(ends[1].clone()),
        _ => {
            let values = origin
                .values()
                .iter()
                .zip(d1.values().iter().zip(d2.values()))
                .map(|(o, (x, y))| o + a * x + b * y)
                .collect();
            ParamVector::new(values, origin.shape_id())
        }
    }
}

fn evaluate(
    origin: ParamVector,
    endpoints: [ParamVector; 2],
    res: usize,
    range: f64,
    ret: &dyn ReturnFn,
) -> Result<LandscapeGrid> {
    if res < 2 {
        return Err(Error::InvalidConfig(format!("grid_res must be >= 2, got {res}")));
    }
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::InvalidConfig(format!("range must be positive, got {range}")));
    }
    let dir1 = endpoints[0].sub(&origin)?;
    let dir2 = endpoints[1].sub(&origin)?;
    let degenerate = [dir1.norm() == 0.0, dir2.norm() == 0.0];
    if degenerate.iter().any(|&d| d) {
        log::warn!("degenerate slice direction(s): {degenerate:?}");
    }
    let alphas = axis(res, range);
    let betas = alphas.clone();
    let cells = par::try_map_indexed(res * res, |k| {
        let p = slice_point(&origin, &endpoints, &dir1, &dir2, alphas[k / res], betas[k % res])?;
        Ok::<_, Error>(ret.evaluate(&p))
    })?;
    Ok(LandscapeGrid { origin, endpoints, dir1, dir2, alphas, betas, returns: cells, range, degenerate })
}

/// Slice through explicit endpoints, evaluated with an arbitrary return function.
pub fn map_slice_with(
    origin: &ParamVector,
    theta1: &ParamVector,
    theta2: &ParamVector,
    grid_res: usize,
    range: f64,
    ret: &dyn ReturnFn,
) -> Result<LandscapeGrid> {
    evaluate(origin.clone(), [theta1.clone(), theta2.clone()], grid_res, range, ret)
}

/// Samples two independent updates of `ckpt` and maps the slice they span.
pub fn map_slice(
    ckpt: &Checkpoint,
    fam: &UpdateFamily,
    grid_res: usize,
    range: f64,
    env: &EnvSpec,
    seed: u64,
) -> Result<LandscapeGrid> {
    let stream = RngStream::root(seed).child("map");
    let src = update_source(ckpt);
    let t1 = sample_update(fam, src, &mut stream.indexed(0))?;
    let t2 = sample_update(fam, src, &mut stream.indexed(1))?;
    let ret = PolicyReturn::new(env, &ckpt.shape)?;
    evaluate(ckpt.actor.clone(), [t1, t2], grid_res, range, &ret)
}

/// Re-evaluates the same slice on a window shrunk by `factor`.
pub fn zoom_with(grid: &LandscapeGrid, factor: f64, ret: &dyn ReturnFn) -> Result<LandscapeGrid> {
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::InvalidConfig(format!("zoom factor must lie in (0, 1), got {factor}")));
    }
    evaluate(grid.origin.clone(), grid.endpoints.clone(), grid.grid_res(), grid.range * factor, ret)
}

pub fn zoom(grid: &LandscapeGrid, factor: f64, env: &EnvSpec, shape: &MlpShape) -> Result<LandscapeGrid> {
    let ret = PolicyReturn::new(env, shape)?;
    zoom_with(grid, factor, &ret)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::env_by_name;

    fn neg_sq(target: Vec<f64>) -> impl Fn(&ParamVector) -> f64 + Sync {
        move |p: &ParamVector| -p.values().iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    fn policy_ckpt(seed: u64) -> (EnvSpec, Checkpoint) {
        let env = env_by_name("corridor-walk").unwrap();
        let shape = MlpShape::policy(4, 2, &[8, 8], 1.0);
        let actor = shape.init(&mut RngStream::root(seed));
        let ck = Checkpoint::from_policy(shape, actor, &env.name, seed, 0);
        (env, ck)
    }

    #[test]
    fn axis_is_symmetric_and_exact() {
        let a = axis(41, 3.0);
        assert_eq!(a[0], -3.0);
        assert_eq!(a[20], 0.0);
        assert_eq!(a[40], 3.0);
        assert_eq!(axis(2, 1.0), vec![-1.0, 1.0]);
    }

    #[test]
    fn origin_and_endpoints_exact() {
        let (env, ck) = policy_ckpt(1);
        let fam = UpdateFamily::GaussianPerturbation { sigma: 0.05 };
        let g = map_slice(&ck, &fam, 7, 3.0, &env, 2).unwrap();
        let ret = PolicyReturn::new(&env, &ck.shape).unwrap();
        assert_eq!(g.at(0.0, 0.0).unwrap().to_bits(), ret.evaluate(&ck.actor).to_bits());
        assert_eq!(g.at(1.0, 0.0).unwrap().to_bits(), ret.evaluate(&g.endpoints[0]).to_bits());
        assert_eq!(g.at(0.0, 1.0).unwrap().to_bits(), ret.evaluate(&g.endpoints[1]).to_bits());
        assert_eq!(g.returns.len(), 49);
        assert_eq!(g.degenerate, [false, false]);
    }

    #[test]
    fn zero_sigma_gives_constant_grid() {
        let (env, ck) = policy_ckpt(2);
        let fam = UpdateFamily::GaussianPerturbation { sigma: 0.0 };
        let g = map_slice(&ck, &fam, 5, 3.0, &env, 2).unwrap();
        let r0 = PolicyReturn::new(&env, &ck.shape).unwrap().evaluate(&ck.actor);
        assert!(g.returns.iter().all(|r| r.to_bits() == r0.to_bits()));
        assert_eq!(g.degenerate, [true, true]);
    }

    #[test]
    fn zoom_shares_values_and_centre() {
        let (env, ck) = policy_ckpt(3);
        let fam = UpdateFamily::GaussianPerturbation { sigma: 0.05 };
        let g = map_slice(&ck, &fam, 9, 2.0, &env, 5).unwrap();
        let z = zoom(&g, 0.5, &env, &ck.shape).unwrap();
        let zz = zoom(&z, 0.5, &env, &ck.shape).unwrap();
        assert_eq!(zz.range, 0.5);
        let mut shared = 0;
        for (k, c) in z.cells().iter().enumerate() {
            if let Some(v) = g.at(c.alpha, c.beta) {
                assert_eq!(v.to_bits(), z.returns[k].to_bits());
                shared += 1;
            }
        }
        assert_eq!(shared, 25);
        assert_eq!(g.at(0.0, 0.0), zz.at(0.0, 0.0));
    }

    #[test]
    fn quadratic_maximum_and_zoom_scaling() {
        let o = ParamVector::flat(vec![0.0, 0.0]);
        let e1 = ParamVector::flat(vec![1.0, 0.0]);
        let e2 = ParamVector::flat(vec![0.0, 1.0]);
        let f = neg_sq(vec![1.2, -0.7]);
        let g = map_slice_with(&o, &e1, &e2, 13, 3.0, &f).unwrap();
        // cells at multiples of 0.5: nearest to (1.2, -0.7) is (1.0, -0.5)
        let (i, j) = g.argmax();
        assert_eq!((g.alphas[i], g.betas[j]), (1.0, -0.5));

        let c = neg_sq(vec![0.0, 0.0]);
        let g = map_slice_with(&o, &e1, &e2, 13, 3.0, &c).unwrap();
        let z = zoom_with(&g, 0.25, &c).unwrap();
        assert!((z.spread() / g.spread() - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn grid_res_below_two_rejected() {
        let o = ParamVector::flat(vec![0.0]);
        let f = |_: &ParamVector| 0.0;
        assert!(map_slice_with(&o, &o, &o, 1, 3.0, &f).is_err());
    }
}
