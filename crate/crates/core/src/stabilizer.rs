//! Post-update CVaR rejection and CVaR-based policy ranking.
//!
//! Each iteration draws `n_mc` post-update returns for the current policy,
//! proposes one TD3 gradient step, draws `n_mc` returns for the proposal and
//! keeps it only if `CVaR_α(after) ≥ (1 − δ)·CVaR_α(before)`. Rejected
//! proposals are undone by restoring the learner snapshot, replay buffer included.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{stratified_bootstrap, Estimate};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::{Checkpoint, Td3State, UpdateFamily, UpdateSource};
use crate::purd::{estimate_purd, PurdProbe};
use crate::rng::RngStream;
use crate::rollout::PolicyReturn;
use crate::stats::{cvar, ltp, mean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RejectionConfig {
    /// CVaR level α.
    pub cvar_level: f64,
    /// Post-update samples per CVaR estimate.
    pub n_mc: usize,
    /// Tolerance δ.
    pub tolerance: f64,
    /// Number of proposals.
    pub budget: usize,
    pub rejection_enabled: bool,
    /// Samples for the LTP measured before and after the run.
    pub n_eval: usize,
    pub ltp_alpha: f64,
    /// Reuse the pre-update samples after a rejection instead of redrawing.
    pub cache_rejected: bool,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        Self {
            cvar_level: 0.1,
            n_mc: 32,
            tolerance: 0.05,
            budget: 40,
            rejection_enabled: true,
            n_eval: 1000,
            ltp_alpha: 0.5,
            cache_rejected: false,
        }
    }
}

impl RejectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cvar_level > 0.0 && self.cvar_level <= 1.0) {
            return Err(Error::InvalidConfig(format!("cvar_level must lie in (0, 1], got {}", self.cvar_level)));
        }
        if self.n_mc == 0 || self.budget == 0 || self.n_eval == 0 {
            return Err(Error::InvalidConfig("n_mc, budget and n_eval must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!("tolerance must be finite and >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Acceptance threshold for a pre-update CVaR.
///
/// `(1 − δ)·c` for `c ≥ 0`. For negative `c` the tolerance widens downwards,
/// `(1 + δ)·c`, so a larger δ never makes acceptance harder.
pub fn threshold(cvar_before: f64, delta: f64) -> f64 {
    if cvar_before >= 0.0 {
        (1.0 - delta) * cvar_before
    } else {
        (1.0 + delta) * cvar_before
    }
}

pub fn accept(cvar_before: f64, cvar_after: f64, delta: f64) -> bool {
    cvar_after >= threshold(cvar_before, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub proposed: bool,
    pub accepted: bool,
    pub cvar_before: f64,
    pub cvar_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationTrace {
    pub checkpoint_id: String,
    pub rejection_enabled: bool,
    pub records: Vec<ProposalRecord>,
    pub ltp_before: Option<f64>,
    pub ltp_after: Option<f64>,
    pub mean_before: f64,
    pub mean_after: f64,
    pub accepted_count: usize,
    pub rejected_count: usize,
}

impl StabilizationTrace {
    /// `ltp_before − ltp_after` when both are defined.
    pub fn ltp_reduction(&self) -> Option<f64> {
        Some(self.ltp_before? - self.ltp_after?)
    }
}

/// Probe family of a learner: one actor step on a fresh minibatch at the learner's settings.
pub fn default_probe(state: &Td3State) -> UpdateFamily {
    UpdateFamily::Td3Minibatch { batch_size: state.cfg.batch_size, lr: state.cfg.actor_lr }
}

fn probe_samples(state: &Td3State, fam: &UpdateFamily, ret: &PolicyReturn, n: usize, stream: RngStream) -> Result<Vec<f64>> {
    let shape = state.actor_shape();
    let probe = PurdProbe::new(fam, UpdateSource::learner(&shape, state), ret, 0).with_stream(stream);
    probe.samples(n)
}

fn evaluate_ltp(state: &Td3State, fam: &UpdateFamily, cfg: &RejectionConfig, env: &EnvSpec, seed: u64) -> Result<(Option<f64>, f64)> {
    let ck = state.to_checkpoint(0, "", true);
    let set = estimate_purd(&ck, fam, cfg.n_eval, env, seed, None, false)?;
    Ok((ltp(&set.samples, cfg.ltp_alpha, env.return_lower_bound()), mean(&set.samples)))
}

/// Runs the rejection loop from `ckpt`, probing with the learner's own TD3 update.
pub fn stabilize(ckpt: &Checkpoint, cfg: &RejectionConfig, env: &EnvSpec, seed: u64) -> Result<(Checkpoint, StabilizationTrace)> {
    let state = ckpt.state.as_deref().ok_or(Error::MissingLearnerState("stabilize"))?;
    stabilize_with(ckpt, cfg, env, seed, &default_probe(state))
}

/// [`stabilize`] with an explicit probe family.
pub fn stabilize_with(
    ckpt: &Checkpoint,
    cfg: &RejectionConfig,
    env: &EnvSpec,
    seed: u64,
    probe: &UpdateFamily,
) -> Result<(Checkpoint, StabilizationTrace)> {
    cfg.validate()?;
    let mut state = ckpt.state.as_deref().ok_or(Error::MissingLearnerState("stabilize"))?.clone();
    if state.env.name != env.name {
        return Err(Error::Contract(format!("learner trained on {}, asked to run on {}", state.env.name, env.name)));
    }
    let root = RngStream::root(seed);
    let eval_seed = root.child("ltp-eval").key();
    let ret = PolicyReturn::new(env, &state.actor_shape())?;
    let (ltp_before, mean_before) = evaluate_ltp(&state, probe, cfg, env, eval_seed)?;

    let mut records = Vec::with_capacity(cfg.budget);
    let mut cached: Option<f64> = None;
    for k in 0..cfg.budget as u64 {
        let probes = root.child("cvar").indexed(k);
        let cvar_before = match cached.take() {
            Some(c) => c,
            None => cvar(&probe_samples(&state, probe, &ret, cfg.n_mc, probes.child("before"))?, cfg.cvar_level),
        };
        let snap = state.snapshot();
        state.propose(&mut root.child("proposal").indexed(k))?;
        let after = probe_samples(&state, probe, &ret, cfg.n_mc, probes.child("after"))?;
        let cvar_after = cvar(&after, cfg.cvar_level);
        let accepted = !cfg.rejection_enabled || accept(cvar_before, cvar_after, cfg.tolerance);
        if accepted {
            state.commit(snap)?;
        } else {
            state.restore(snap)?;
            if cfg.cache_rejected {
                cached = Some(cvar_before);
            }
        }
        log::debug!("proposal {k}: cvar {cvar_before:.4} -> {cvar_after:.4}, accepted {accepted}");
        records.push(ProposalRecord { proposed: true, accepted, cvar_before, cvar_after });
    }

    let (ltp_after, mean_after) = evaluate_ltp(&state, probe, cfg, env, eval_seed)?;
    let accepted_count = records.iter().filter(|r| r.accepted).count();
    let out = state.to_checkpoint(ckpt.seed, &ckpt.config_hash, true);
    let trace = StabilizationTrace {
        checkpoint_id: ckpt.id(),
        rejection_enabled: cfg.rejection_enabled,
        rejected_count: records.len() - accepted_count,
        accepted_count,
        records,
        ltp_before,
        ltp_after,
        mean_before,
        mean_after,
    };
    Ok((out, trace))
}

/// Ids in descending order of `score`, ties broken by ascending id.
pub fn rank_scores(mut scored: Vec<(String, f64)>) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

/// Ranks checkpoints by the α-CVaR of their post-update returns.
pub fn rank_by_cvar(
    checkpoints: &[Checkpoint],
    fam: &UpdateFamily,
    n: usize,
    alpha: f64,
    env: &EnvSpec,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    if checkpoints.is_empty() {
        return Err(Error::Empty("checkpoint list"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let root = RngStream::root(seed).child("rank");
    let scored = checkpoints
        .iter()
        .map(|c| {
            let set = estimate_purd(c, fam, n, env, root.child(&c.id()).key(), None, false)?;
            Ok((c.id(), cvar(&set.samples, alpha)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(scored))
}

/// One stabilizer outcome tagged with its environment and condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionEntry {
    pub env: String,
    pub rejection_enabled: bool,
    pub reduction: f64,
}

impl ReductionEntry {
    pub fn from_trace(env: &str, trace: &StabilizationTrace) -> Option<Self> {
        Some(Self { env: env.to_string(), rejection_enabled: trace.rejection_enabled, reduction: trace.ltp_reduction()? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub estimate: Estimate,
    pub median: f64,
    pub count: usize,
    pub per_env: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rejection: Option<ConditionSummary>,
    pub baseline: Option<ConditionSummary>,
    pub n_boot: usize,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(entries: &[&ReductionEntry], n_boot: usize, rng: &mut RngStream) -> Result<Option<ConditionSummary>> {
    if entries.is_empty() {
        return Ok(None);
    }
    let mut by_env: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in entries {
        by_env.entry(e.env.clone()).or_default().push(e.reduction);
    }
    let strata: Vec<Vec<f64>> = by_env.values().cloned().collect();
    let estimate = stratified_bootstrap(&strata, n_boot, rng)?;
    let all: Vec<f64> = entries.iter().map(|e| e.reduction).collect();
    Ok(Some(ConditionSummary {
        estimate,
        median: median(&all),
        count: all.len(),
        per_env: by_env.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
    }))
}

/// Mean LTP reduction per condition, stratified by environment.
pub fn ltp_reduction_report(entries: &[ReductionEntry], n_boot: usize, seed: u64) -> Result<ReductionReport> {
    if entries.is_empty() {
        return Err(Error::Empty("stabilizer traces"));
    }
    let root = RngStream::root(seed).child("reduction-bootstrap");
    let on: Vec<&ReductionEntry> = entries.iter().filter(|e| e.rejection_enabled).collect();
    let off: Vec<&ReductionEntry> = entries.iter().filter(|e| !e.rejection_enabled).collect();
    Ok(ReductionReport {
        rejection: summarize(&on, n_boot, &mut root.child("rejection"))?,
        baseline: summarize(&off, n_boot, &mut root.child("baseline"))?,
        n_boot,
    })
}
