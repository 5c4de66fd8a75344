//! Post-update return distributions.
//!
//! Draw `i` of a distribution uses the stream `root(seed).child("purd").indexed(i)`,
//! so every sample can be regenerated on its own and parallel evaluation
//! gives the same array as sequential evaluation.

use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{sample_update, Checkpoint, UpdateFamily, UpdateSource};
use crate::par;
use crate::policy::ParamVector;
use crate::rng::RngStream;
use crate::rollout::{PolicyReturn, ReturnFn, Trajectory};
use crate::stats::{stats, DistStats, StatsConfig};

/// Paper-protocol sample count per distribution.
pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartState {
    Initial,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSource {
    pub checkpoint_id: String,
    pub family: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSampleSet {
    pub samples: Vec<f64>,
    pub source: SampleSource,
    pub start: StartState,
    /// Lower bound on returns in this task, used for LTP.
    pub lower_bound: f64,
    pub trajectories: Option<Vec<Trajectory>>,
}

impl ReturnSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Everything needed to regenerate any draw of one distribution.
pub struct PurdProbe<'a> {
    pub family: &'a UpdateFamily,
    pub source: UpdateSource<'a>,
    pub ret: &'a (dyn ReturnFn + 'a),
    pub stream: RngStream,
}

impl<'a> PurdProbe<'a> {
    pub fn new(family: &'a UpdateFamily, source: UpdateSource<'a>, ret: &'a (dyn ReturnFn + 'a), seed: u64) -> Self {
        Self { family, source, ret, stream: RngStream::root(seed).child("purd") }
    }

    pub fn with_stream(mut self, stream: RngStream) -> Self {
        self.stream = stream;
        self
    }

    /// Parameters after update draw `i`.
    pub fn params(&self, i: usize) -> Result<ParamVector> {
        let mut rng = self.stream.indexed(i as u64);
        sample_update(self.family, self.source, &mut rng)
    }

    pub fn sample(&self, i: usize) -> Result<f64> {
        Ok(self.ret.evaluate(&self.params(i)?))
    }

    /// Draws `0..n`, evaluated in parallel, ordered by index.
    pub fn samples(&self, n: usize) -> Result<Vec<f64>> {
        par::try_map_indexed(n, |i| self.sample(i))
    }
}

fn check_family(ckpt: &Checkpoint, fam: &UpdateFamily) -> Result<()> {
    if fam.requires_learner() && ckpt.state.is_none() {
        return Err(Error::MissingLearnerState(fam.name()));
    }
    Ok(())
}

/// Source for probing a checkpoint: the learner when present, otherwise the bare policy.
pub fn update_source(ckpt: &Checkpoint) -> UpdateSource<'_> {
    match ckpt.state.as_deref() {
        Some(st) => UpdateSource { shape: &ckpt.shape, actor: &ckpt.actor, learner: Some(st) },
        None => UpdateSource::policy(&ckpt.shape, &ckpt.actor),
    }
}

/// Estimates the post-update return distribution of `ckpt` with `n` draws.
///
/// Rollouts start from the reference state (or `start`) with no initial-state
/// noise, so all variation comes from the update.
pub fn estimate_purd(
    ckpt: &Checkpoint,
    fam: &UpdateFamily,
    n: usize,
    env: &EnvSpec,
    seed: u64,
    start: Option<&[f64]>,
    keep_trajectories: bool,
) -> Result<ReturnSampleSet> {
    if n == 0 {
        return Err(Error::InvalidConfig("purd sample count must be >= 1".into()));
    }
    check_family(ckpt, fam)?;
    let ret = match start {
        None => PolicyReturn::new(env, &ckpt.shape)?,
        Some(s) => PolicyReturn::from_state(env, &ckpt.shape, env.state_at(s)?)?,
    };
    let probe = PurdProbe::new(fam, update_source(ckpt), &ret, seed);
    let (samples, trajectories) = if keep_trajectories {
        let trajs = par::try_map_indexed(n, |i| Ok::<_, Error>(ret.trajectory(&probe.params(i)?)))?;
        (trajs.iter().map(Trajectory::total_return).collect(), Some(trajs))
    } else {
        (probe.samples(n)?, None)
    };
    Ok(ReturnSampleSet {
        samples,
        source: SampleSource { checkpoint_id: ckpt.id(), family: fam.name().into(), seed },
        start: start.map_or(StartState::Initial, |s| StartState::Explicit(s.to_vec())),
        lower_bound: env.return_lower_bound(),
        trajectories,
    })
}

/// One row of a mean-vs-spread scatter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub checkpoint_id: String,
    pub step: u64,
    pub stats: DistStats,
}

impl ScatterRow {
    pub fn ltp_defined(&self) -> bool {
        self.stats.ltp.is_some()
    }
}

/// Samples and statistics of one checkpoint's distribution, as used by [`scatter_table`].
pub fn scatter_entry(
    ckpt: &Checkpoint,
    fam: &UpdateFamily,
    n: usize,
    env: &EnvSpec,
    seed: u64,
    cfg: &StatsConfig,
) -> Result<(ScatterRow, ReturnSampleSet)> {
    let root = RngStream::root(seed);
    let cfg = StatsConfig { lower_bound: env.return_lower_bound(), ..*cfg };
    let id = ckpt.id();
    let set = estimate_purd(ckpt, fam, n, env, root.child("scatter").child(&id).key(), None, false)?;
    let mut boot = root.child("bootstrap").child(&id);
    let st = if set.samples.len() == 1 {
        stats(&[set.samples[0]; 2], &cfg, &mut boot)?
    } else {
        stats(&set.samples, &cfg, &mut boot)?
    };
    Ok((ScatterRow { checkpoint_id: id, step: ckpt.step, stats: st }, set))
}

/// Distribution statistics for every checkpoint, in input order.
///
/// Each checkpoint's draws are keyed by its id, so a row does not depend on
/// which other checkpoints are in the table.
pub fn scatter_table(
    checkpoints: &[Checkpoint],
    fam: &UpdateFamily,
    n: usize,
    env: &EnvSpec,
    seed: u64,
    cfg: &StatsConfig,
) -> Result<Vec<ScatterRow>> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoint list"));
    }
    checkpoints.iter().map(|c| Ok(scatter_entry(c, fam, n, env, seed, cfg)?.0)).collect()
}
