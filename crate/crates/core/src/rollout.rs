//! Episode rollouts and the return landscape R(θ).

use crate::env::{EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::policy::{MlpShape, ParamVector};

/// Anything that maps a parameter vector to a scalar return.
///
/// Implemented by [`PolicyReturn`] for the built-in tasks and by synthetic
/// landscapes used as analytic oracles.
pub trait ReturnFn: Sync {
    fn evaluate(&self, theta: &ParamVector) -> f64;
}

impl<F> ReturnFn for F
where
    F: Fn(&ParamVector) -> f64 + Sync,
{
    fn evaluate(&self, theta: &ParamVector) -> f64 {
        self(theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminated_at: Option<usize>,
}

impl Trajectory {
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Deterministic episode return of a policy from a fixed start state.
#[derive(Debug, Clone)]
pub struct PolicyReturn {
    env: EnvSpec,
    shape: MlpShape,
    start: EnvState,
}

impl PolicyReturn {
    /// Return from the task's reference state.
    pub fn new(env: &EnvSpec, shape: &MlpShape) -> Result<Self> {
        Self::from_state(env, shape, env.reference_state())
    }

    pub fn from_state(env: &EnvSpec, shape: &MlpShape, start: EnvState) -> Result<Self> {
        env.validate()?;
        if shape.input_dim != env.state_dim {
            return Err(Error::Dimension { expected: env.state_dim, got: shape.input_dim });
        }
        if shape.output_dim != env.action_dim {
            return Err(Error::Dimension { expected: env.action_dim, got: shape.output_dim });
        }
        if start.s.len() != env.state_dim {
            return Err(Error::Dimension { expected: env.state_dim, got: start.s.len() });
        }
        Ok(Self { env: env.with_deterministic_start(), shape: shape.clone(), start })
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn start(&self) -> &EnvState {
        &self.start
    }

    pub fn trajectory(&self, theta: &ParamVector) -> Trajectory {
        rollout(&self.env, &self.shape, theta, &self.start, true).1.expect("trajectory requested")
    }
}

impl ReturnFn for PolicyReturn {
    fn evaluate(&self, theta: &ParamVector) -> f64 {
        rollout(&self.env, &self.shape, theta, &self.start, false).0
    }
}

/// Runs one episode, summing rewards left to right.
///
/// Panics only on internal contract violations (dimensions are validated by
/// [`PolicyReturn`]).
pub fn rollout(
    env: &EnvSpec,
    shape: &MlpShape,
    theta: &ParamVector,
    start: &EnvState,
    record: bool,
) -> (f64, Option<Trajectory>) {
    let mut traj = record.then(|| Trajectory {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        terminated_at: None,
    });
    let mut st = start.clone();
    let mut ret = 0.0;
    let mut action = Vec::with_capacity(env.action_dim);
    let mut tmp = Vec::new();
    while st.t < env.horizon && !st.terminated {
        shape.forward_raw(theta.values(), &st.s, &mut action, &mut tmp);
        let res = env.step(&st, &action).expect("rollout step");
        ret += res.reward;
        if let Some(tr) = traj.as_mut() {
            tr.states.push(st.s.clone());
            tr.actions.push(action.clone());
            tr.rewards.push(res.reward);
            if res.next_state.terminated {
                tr.terminated_at = Some(res.next_state.t);
            }
        }
        st = res.next_state;
    }
    (ret, traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{builtin_envs, env_by_name};
    use crate::rng::RngStream;

    #[test]
    fn rollout_is_bit_deterministic() {
        for env in builtin_envs() {
            let shape = MlpShape::policy(env.state_dim, env.action_dim, &[16, 16], env.action_bound);
            let theta = shape.init(&mut RngStream::root(3));
            let f = PolicyReturn::new(&env, &shape).unwrap();
            assert_eq!(f.evaluate(&theta).to_bits(), f.evaluate(&theta).to_bits());
            let tr = f.trajectory(&theta);
            assert_eq!(tr.total_return().to_bits(), f.evaluate(&theta).to_bits());
        }
    }

    #[test]
    fn returns_within_documented_bounds() {
        for env in builtin_envs() {
            let shape = MlpShape::policy(env.state_dim, env.action_dim, &[8], env.action_bound);
            let (lo, hi) = env.reward_bounds();
            let f = PolicyReturn::new(&env, &shape).unwrap();
            for seed in 0..50 {
                let tr = f.trajectory(&shape.init(&mut RngStream::root(seed)));
                assert!(tr.rewards.iter().all(|r| *r >= lo && *r <= hi));
                let t = env.horizon as f64;
                let ret = tr.total_return();
                assert!(ret >= (t * lo).min(0.0) && ret <= t * hi);
            }
        }
    }

    #[test]
    fn random_policies_sometimes_fail_early_on_corridor() {
        let env = env_by_name("corridor-walk").unwrap();
        let shape = MlpShape::policy(4, 2, &[32, 32], 1.0);
        let root = RngStream::root(99);
        let n = 1000;
        let mut early = 0;
        let mut full = 0;
        for i in 0..n {
            let mut rng = root.indexed(i);
            let theta = shape.init(&mut rng);
            let start = env.reset(&mut rng);
            let (_, tr) = rollout(&env, &shape, &theta, &start, true);
            match tr.unwrap().terminated_at {
                Some(t) if t < env.horizon / 2 => early += 1,
                None => full += 1,
                _ => {}
            }
        }
        assert!(early as f64 >= 0.01 * n as f64, "early = {early}");
        let _ = full;
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let env = env_by_name("pendulum-balance").unwrap();
        let shape = MlpShape::policy(3, 1, &[4], 1.0);
        assert!(PolicyReturn::new(&env, &shape).is_err());
    }
}
