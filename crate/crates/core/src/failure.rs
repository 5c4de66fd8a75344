//! Successful/failing trajectory pairs and race curves.

use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{Checkpoint, ReplayBuffer, UpdateFamily};
use crate::par;
use crate::purd::{estimate_purd, update_source, PurdProbe, ReturnSampleSet, StartState};
use crate::rng::RngStream;
use crate::rollout::{PolicyReturn, Trajectory};
use crate::stats::{ltp, mean, mode};

/// A successful return lies within this fraction of the mean.
pub const SUCCESS_BAND: f64 = 0.1;
/// A failing return lies below this fraction of the mode.
pub const FAILURE_FRAC: f64 = 0.5;

/// Why no pair could be selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoPair {
    /// "Within 10% of the mean" is not meaningful for a non-positive mean.
    NonPositiveMean,
    NoSuccessful,
    NoFailing,
}

/// Draw indices of the selected pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairChoice {
    pub successful: usize,
    pub failing: usize,
    pub mean: f64,
    pub mode: f64,
}

/// First successful and first failing draw by index.
pub fn select_indices(samples: &[f64]) -> std::result::Result<PairChoice, NoPair> {
    if samples.is_empty() {
        return Err(NoPair::NoSuccessful);
    }
    let m = mean(samples);
    if !(m > 0.0) {
        return Err(NoPair::NonPositiveMean);
    }
    let md = mode(samples);
    let successful = samples.iter().position(|r| (r - m).abs() <= SUCCESS_BAND * m.abs()).ok_or(NoPair::NoSuccessful)?;
    let failing = samples.iter().position(|&r| r < FAILURE_FRAC * md).ok_or(NoPair::NoFailing)?;
    Ok(PairChoice { successful, failing, mean: m, mode: md })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub choice: PairChoice,
    pub successful: Trajectory,
    pub failing: Trajectory,
}

/// Pair from a sample set with retained trajectories.
pub fn select_pair(set: &ReturnSampleSet) -> Result<std::result::Result<TrajectoryPair, NoPair>> {
    let trajs = set.trajectories.as_ref().ok_or_else(|| Error::Contract("select_pair needs retained trajectories".into()))?;
    Ok(select_indices(&set.samples).map(|c| TrajectoryPair {
        choice: c,
        successful: trajs[c.successful].clone(),
        failing: trajs[c.failing].clone(),
    }))
}

/// Re-runs draw `index` of `set`, which must have been produced from `ckpt` and `fam`.
pub fn resimulate(set: &ReturnSampleSet, index: usize, ckpt: &Checkpoint, fam: &UpdateFamily, env: &EnvSpec) -> Result<Trajectory> {
    if set.source.checkpoint_id != ckpt.id() || set.source.family != fam.name() {
        return Err(Error::Contract(format!(
            "sample set from {}/{} cannot be re-simulated with {}/{}",
            set.source.checkpoint_id,
            set.source.family,
            ckpt.id(),
            fam.name()
        )));
    }
    let ret = match &set.start {
        StartState::Initial => PolicyReturn::new(env, &ckpt.shape)?,
        StartState::Explicit(s) => PolicyReturn::from_state(env, &ckpt.shape, env.state_at(s)?)?,
    };
    let probe = PurdProbe::new(fam, update_source(ckpt), &ret, set.source.seed);
    Ok(ret.trajectory(&probe.params(index)?))
}

/// Like [`select_pair`], re-simulating the chosen draws when trajectories were not kept.
pub fn select_pair_resim(
    set: &ReturnSampleSet,
    ckpt: &Checkpoint,
    fam: &UpdateFamily,
    env: &EnvSpec,
) -> Result<std::result::Result<TrajectoryPair, NoPair>> {
    if set.trajectories.is_some() {
        return select_pair(set);
    }
    match select_indices(&set.samples) {
        Err(e) => Ok(Err(e)),
        Ok(c) => Ok(Ok(TrajectoryPair {
            choice: c,
            successful: resimulate(set, c.successful, ckpt, fam, env)?,
            failing: resimulate(set, c.failing, ckpt, fam, env)?,
        })),
    }
}

/// Cumulative returns of two episodes, held constant after the shorter one ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceCurve {
    /// `(R≤t successful, R≤t failing)` for t = 1..=T.
    pub points: Vec<(f64, f64)>,
}

fn cumulative(rewards: &[f64], len: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        if let Some(r) = rewards.get(t) {
            acc += r;
        }
        out.push(acc);
    }
    out
}

pub fn race_curve(succ: &Trajectory, fail: &Trajectory) -> RaceCurve {
    race_curve_rewards(&succ.rewards, &fail.rewards)
}

pub fn race_curve_rewards(succ: &[f64], fail: &[f64]) -> RaceCurve {
    let len = succ.len().max(fail.len());
    let a = cumulative(succ, len);
    let b = cumulative(fail, len);
    RaceCurve { points: a.into_iter().zip(b).collect() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLtp {
    pub buffer_index: usize,
    pub state: Vec<f64>,
    /// `None` when the distribution's mode is not above the lower bound.
    pub ltp: Option<f64>,
}

/// LTP of the post-update distribution started from every `stride`-th buffer state.
#[allow(clippy::too_many_arguments)]
pub fn ltp_over_states(
    ckpt: &Checkpoint,
    fam: &UpdateFamily,
    buffer: &ReplayBuffer,
    stride: usize,
    n: usize,
    ltp_alpha: f64,
    env: &EnvSpec,
    seed: u64,
) -> Result<Vec<StateLtp>> {
    if buffer.is_empty() {
        return Err(Error::Empty("replay buffer"));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let idx: Vec<usize> = (0..buffer.len()).step_by(stride).collect();
    let stream = RngStream::root(seed).child("ltp-states");
    let lb = env.return_lower_bound();
    par::try_map_indexed(idx.len(), |k| {
        let i = idx[k];
        let state = buffer.state_at(i).expect("index below len").to_vec();
        let set = estimate_purd(ckpt, fam, n, env, stream.indexed(i as u64).key(), Some(&state), false)?;
        Ok(StateLtp { buffer_index: i, ltp: ltp(&set.samples, ltp_alpha, lb), state })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::env_by_name;
    use crate::learner::Transition;
    use crate::policy::MlpShape;

    fn traj(rewards: Vec<f64>) -> Trajectory {
        Trajectory { states: vec![], actions: vec![], rewards, terminated_at: None }
    }

    #[test]
    fn race_curve_padding() {
        let c = race_curve(&traj(vec![1.0, 1.0, 1.0]), &traj(vec![1.0]));
        assert_eq!(c.points, vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]);
        let c = race_curve(&traj(vec![1.0, 1.0, 1.0]), &traj(vec![1.0, -1.0, 0.0]));
        assert_eq!(c.points, vec![(1.0, 1.0), (2.0, 0.0), (3.0, 0.0)]);
        let t = traj(vec![0.5, 0.25, 2.0]);
        assert!(race_curve(&t, &t).points.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_indices(&[5.0; 10]), Err(NoPair::NoFailing));
        let mut s = vec![100.0; 9];
        s.push(10.0);
        let c = select_indices(&s).unwrap();
        assert_eq!(c.failing, 9);
        assert_eq!(c.successful, 0);
        assert!((c.mode - 99.55).abs() < 1e-9);
        // mean 100: 91 is inside the band, 89 is not; mode ≈ 100.8
        let c = select_indices(&[89.0, 91.0, 100.0, 100.0, 100.0, 120.0, 20.0, 180.0]).unwrap();
        assert_eq!((c.successful, c.failing), (1, 6));
        assert_eq!(select_indices(&[-1.0, -2.0]), Err(NoPair::NonPositiveMean));
    }

    #[test]
    fn resimulation_matches_retained() {
        let env = env_by_name("corridor-walk").unwrap();
        let shape = MlpShape::policy(4, 2, &[8, 8], 1.0);
        let ck = Checkpoint::from_policy(shape.clone(), shape.init(&mut RngStream::root(7)), &env.name, 7, 0);
        let fam = UpdateFamily::GaussianPerturbation { sigma: 0.5 };
        let kept = estimate_purd(&ck, &fam, 64, &env, 1, None, true).unwrap();
        let bare = estimate_purd(&ck, &fam, 64, &env, 1, None, false).unwrap();
        for i in [0, 13, 63] {
            assert_eq!(resimulate(&bare, i, &ck, &fam, &env).unwrap(), kept.trajectories.as_ref().unwrap()[i]);
        }
        assert_eq!(select_pair(&kept).unwrap(), select_pair_resim(&bare, &ck, &fam, &env).unwrap());
        assert!(select_pair(&bare).is_err());
    }

    #[test]
    fn ltp_over_states_rows() {
        let env = env_by_name("sticky-ridge").unwrap();
        let shape = MlpShape::policy(2, 1, &[8], 1.0);
        let ck = Checkpoint::from_policy(shape.clone(), shape.init(&mut RngStream::root(2)), &env.name, 2, 0);
        let mut buf = ReplayBuffer::new(16, 2, 1).unwrap();
        for i in 0..10 {
            let s = vec![i as f64 * 0.5, 0.1];
            buf.push(Transition { s: s.clone(), a: vec![0.0], r: 0.0, s_next: s, done: false }).unwrap();
        }
        let fam = UpdateFamily::GaussianPerturbation { sigma: 0.0 };
        let rows = ltp_over_states(&ck, &fam, &buf, 3, 8, 0.5, &env, 0).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.ltp.map_or(true, |v| v == 0.0)));
        let rows = ltp_over_states(&ck, &fam, &buf, 10, 8, 0.5, &env, 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].buffer_index, 0);
    }
}
