//! Deterministic finite-horizon control tasks.
//!
//! All three built-ins share horizon 200 and the explicit-Euler scheme
//! below. Constants:
//!
//! | task               | constant                     | value |
//! |--------------------|------------------------------|-------|
//! | all                | dt                           | 0.05  |
//! | corridor-walk      | thrust gain                  | 2.0   |
//! |                    | velocity drag                | 0.5   |
//! |                    | lateral instability k0 + k1·|vx| | 1.0 + 2.0·|vx| |
//! |                    | speed clamp                  | 0.9   |
//! |                    | alive bonus                  | 1.0   |
//! |                    | control cost                 | 0.01·‖a‖² |
//! |                    | termination                  | |y| > 1 |
//! | sticky-ridge       | thrust gain / drag           | 2.0 / 0.5 |
//! |                    | speed clamp                  | 2.0   |
//! |                    | pit interval                 | x ∈ [3, 4] |
//! |                    | pit speed threshold          | 0.6   |
//! |                    | pit damping factor           | 0.2   |
//! |                    | control cost                 | 0.01·a² |
//! | pendulum-balance   | gravity g/l                  | 10.0  |
//! |                    | torque gain                  | 4.0   |
//! |                    | angular damping              | 0.1   |
//! |                    | angular speed clamp          | 8.0   |
//!
//! Per-step reward intervals: corridor-walk [0.08, 1.9], sticky-ridge
//! [-2.01, 2.0], pendulum-balance [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DT: f64 = 0.05;
pub const HORIZON: usize = 200;

const CW_GAIN: f64 = 2.0;
const CW_DRAG: f64 = 0.5;
const CW_K0: f64 = 1.0;
const CW_K1: f64 = 2.0;
const CW_VMAX: f64 = 0.9;
const CW_ALIVE: f64 = 1.0;
const CW_CTRL: f64 = 0.01;

const SR_GAIN: f64 = 2.0;
const SR_DRAG: f64 = 0.5;
const SR_VMAX: f64 = 2.0;
pub const SR_PIT: (f64, f64) = (3.0, 4.0);
pub const SR_PIT_SPEED: f64 = 0.6;
pub const SR_PIT_DAMPING: f64 = 0.2;
const SR_CTRL: f64 = 0.01;

const PB_GRAVITY: f64 = 10.0;
const PB_GAIN: f64 = 4.0;
const PB_DAMPING: f64 = 0.1;
const PB_WMAX: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    CorridorWalk,
    StickyRidge,
    PendulumBalance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub init_ref: Vec<f64>,
    pub init_halfwidth: Vec<f64>,
    pub action_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub s: Vec<f64>,
    pub t: usize,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// The three built-in tasks.
pub fn builtin_envs() -> Vec<EnvSpec> {
    vec![
        EnvSpec {
            name: "corridor-walk".into(),
            kind: EnvKind::CorridorWalk,
            state_dim: 4,
            action_dim: 2,
            horizon: HORIZON,
            init_ref: vec![0.0; 4],
            init_halfwidth: vec![0.0, 0.02, 0.0, 0.02],
            action_bound: 1.0,
        },
        EnvSpec {
            name: "sticky-ridge".into(),
            kind: EnvKind::StickyRidge,
            state_dim: 2,
            action_dim: 1,
            horizon: HORIZON,
            init_ref: vec![0.0, 0.0],
            init_halfwidth: vec![0.05, 0.02],
            action_bound: 1.0,
        },
        EnvSpec {
            name: "pendulum-balance".into(),
            kind: EnvKind::PendulumBalance,
            state_dim: 2,
            action_dim: 1,
            horizon: HORIZON,
            init_ref: vec![std::f64::consts::PI, 0.0],
            init_halfwidth: vec![0.05, 0.05],
            action_bound: 1.0,
        },
    ]
}

pub fn env_by_name(name: &str) -> Result<EnvSpec> {
    builtin_envs()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown environment `{name}`")))
}

fn wrap_angle(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = (phi + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    w
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 || self.state_dim < 1 || self.action_dim < 1 {
            return Err(Error::InvalidConfig(format!(
                "{}: horizon, state_dim and action_dim must be >= 1",
                self.name
            )));
        }
        if self.init_ref.len() != self.state_dim || self.init_halfwidth.len() != self.state_dim {
            return Err(Error::Dimension { expected: self.state_dim, got: self.init_ref.len() });
        }
        if self.init_halfwidth.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig("init_halfwidth must be >= 0".into()));
        }
        if !(self.action_bound > 0.0) {
            return Err(Error::InvalidConfig("action_bound must be > 0".into()));
        }
        Ok(())
    }

    /// Same task with a zero-width initial box, so every episode starts at `init_ref`.
    pub fn with_deterministic_start(&self) -> Self {
        let mut e = self.clone();
        e.init_halfwidth = vec![0.0; self.state_dim];
        e
    }

    pub fn reset(&self, rng: &mut RngStream) -> EnvState {
        let s = self
            .init_ref
            .iter()
            .zip(&self.init_halfwidth)
            .map(|(&c, &w)| if w == 0.0 { c } else { rng.uniform_in(c - w, c + w) })
            .collect();
        EnvState { s, t: 0, terminated: false }
    }

    /// Start state at the reference point.
    pub fn reference_state(&self) -> EnvState {
        EnvState { s: self.init_ref.clone(), t: 0, terminated: false }
    }

    /// Start state at an arbitrary point with a fresh clock.
    pub fn state_at(&self, s: &[f64]) -> Result<EnvState> {
        if s.len() != self.state_dim {
            return Err(Error::Dimension { expected: self.state_dim, got: s.len() });
        }
        Ok(EnvState { s: s.to_vec(), t: 0, terminated: false })
    }

    /// Per-step reward interval `(min, max)`.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let b2 = self.action_bound * self.action_bound;
        match self.kind {
            EnvKind::CorridorWalk => {
                (CW_ALIVE - CW_VMAX - CW_CTRL * 2.0 * b2, CW_ALIVE + CW_VMAX)
            }
            EnvKind::StickyRidge => (-SR_VMAX - SR_CTRL * b2, SR_VMAX),
            EnvKind::PendulumBalance => (0.0, 1.0),
        }
    }

    /// Lower bound on episode return used by left-tail statistics.
    ///
    /// Nonnegative-reward tasks use 0; sticky-ridge uses `T · r_min`.
    pub fn return_lower_bound(&self) -> f64 {
        let (lo, _) = self.reward_bounds();
        if lo >= 0.0 {
            0.0
        } else {
            self.horizon as f64 * lo
        }
    }

    pub fn step(&self, st: &EnvState, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.action_dim {
            return Err(Error::Dimension { expected: self.action_dim, got: action.len() });
        }
        if st.terminated {
            return Ok(StepResult { next_state: st.clone(), reward: 0.0, done: true });
        }
        if st.t >= self.horizon {
            return Err(Error::Contract(format!(
                "step called at t = {} on horizon {}",
                st.t, self.horizon
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let b = self.action_bound;
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-b, b)).collect();
        let (s, reward, terminated) = match self.kind {
            EnvKind::CorridorWalk => corridor_step(&st.s, &a),
            EnvKind::StickyRidge => ridge_step(&st.s, &a),
            EnvKind::PendulumBalance => pendulum_step(&st.s, &a),
        };
        let t = st.t + 1;
        let done = terminated || t == self.horizon;
        Ok(StepResult { next_state: EnvState { s, t, terminated }, reward, done })
    }
}

fn corridor_step(s: &[f64], a: &[f64]) -> (Vec<f64>, f64, bool) {
    let (x, y, vx, vy) = (s[0], s[1], s[2], s[3]);
    let vx = (vx + DT * (CW_GAIN * a[0] - CW_DRAG * vx)).clamp(-CW_VMAX, CW_VMAX);
    let k = CW_K0 + CW_K1 * vx.abs();
    let vy = vy + DT * (CW_GAIN * a[1] + k * y - CW_DRAG * vy);
    let x = x + DT * vx;
    let y = y + DT * vy;
    let ctrl = CW_CTRL * (a[0] * a[0] + a[1] * a[1]);
    let reward = CW_ALIVE + vx - ctrl;
    (vec![x, y, vx, vy], reward, y.abs() > 1.0)
}

fn ridge_step(s: &[f64], a: &[f64]) -> (Vec<f64>, f64, bool) {
    let (x, v) = (s[0], s[1]);
    let mut v = v + DT * (SR_GAIN * a[0] - SR_DRAG * v);
    if x >= SR_PIT.0 && x <= SR_PIT.1 && s[1].abs() < SR_PIT_SPEED {
        v *= SR_PIT_DAMPING;
    }
    let v = v.clamp(-SR_VMAX, SR_VMAX);
    let x = x + DT * v;
    let reward = v - SR_CTRL * a[0] * a[0];
    (vec![x, v], reward, false)
}

fn pendulum_step(s: &[f64], a: &[f64]) -> (Vec<f64>, f64, bool) {
    let (phi, w) = (s[0], s[1]);
    let w = (w + DT * (PB_GRAVITY * phi.sin() + PB_GAIN * a[0] - PB_DAMPING * w))
        .clamp(-PB_WMAX, PB_WMAX);
    let phi = wrap_angle(phi + DT * w);
    (vec![phi, w], pendulum_reward(phi, w, a[0]), false)
}

/// Reward in [0, 1]; equals 1 exactly at the upright rest state with zero torque.
fn pendulum_reward(phi: f64, w: f64, a: f64) -> f64 {
    let upright = 0.5 * (1.0 + phi.cos());
    let calm = 1.0 / (1.0 + 0.1 * w * w + 0.1 * a * a);
    upright * upright * calm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: &str) -> EnvSpec {
        env_by_name(name).unwrap()
    }

    #[test]
    fn three_builtins_all_valid() {
        let envs = builtin_envs();
        let names: Vec<_> = envs.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["corridor-walk", "sticky-ridge", "pendulum-balance"]);
        for e in &envs {
            e.validate().unwrap();
            assert_eq!(e.horizon, 200);
        }
    }

    #[test]
    fn zero_halfwidth_reset_is_reference() {
        let e = env("corridor-walk").with_deterministic_start();
        let mut rng = RngStream::root(1);
        assert_eq!(e.reset(&mut rng).s, e.init_ref);
    }

    #[test]
    fn reset_is_deterministic() {
        let e = env("sticky-ridge");
        let a = e.reset(&mut RngStream::root(7));
        let b = e.reset(&mut RngStream::root(7));
        assert_eq!(a, b);
    }

    #[test]
    fn reset_within_box_over_many_draws() {
        let mut e = env("corridor-walk");
        e.init_halfwidth = vec![0.1; 4];
        e.init_ref = vec![0.5, -0.25, 0.0, 1.0];
        let mut rng = RngStream::root(11);
        for _ in 0..10_000 {
            let s = e.reset(&mut rng).s;
            for (i, v) in s.iter().enumerate() {
                assert!(*v >= e.init_ref[i] - 0.1 && *v <= e.init_ref[i] + 0.1);
            }
        }
    }

    #[test]
    fn terminated_state_is_absorbing() {
        let e = env("corridor-walk");
        let st = EnvState { s: vec![1.0, 2.0, 0.3, 0.1], t: 10, terminated: true };
        let r = e.step(&st, &[1.0, -1.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.next_state, st);
        assert!(r.done);
    }

    #[test]
    fn pendulum_upright_rest_gives_max_reward() {
        let e = env("pendulum-balance");
        let st = e.state_at(&[0.0, 0.0]).unwrap();
        let r = e.step(&st, &[0.0]).unwrap();
        // sin(0) = 0 so the state stays at rest; reward = 1² · 1/(1 + 0) = 1
        assert_eq!(r.next_state.s, vec![0.0, 0.0]);
        assert_eq!(r.reward, 1.0);
        assert_eq!(r.reward, e.reward_bounds().1);
    }

    #[test]
    fn step_is_bit_deterministic() {
        for e in builtin_envs() {
            let st = e.reset(&mut RngStream::root(3));
            let a = vec![0.3; e.action_dim];
            assert_eq!(e.step(&st, &a).unwrap(), e.step(&st, &a).unwrap());
        }
    }

    #[test]
    fn stepping_past_horizon_is_reported() {
        let e = env("pendulum-balance");
        let st = EnvState { s: vec![0.0, 0.0], t: e.horizon, terminated: false };
        assert!(matches!(e.step(&st, &[0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn corridor_terminates_outside_lane() {
        let e = env("corridor-walk");
        let st = e.state_at(&[0.0, 0.99, 0.0, 2.0]).unwrap();
        let r = e.step(&st, &[0.0, 1.0]).unwrap();
        assert!(r.next_state.s[1].abs() > 1.0);
        assert!(r.next_state.terminated && r.done);
    }

    #[test]
    fn ridge_pit_damps_slow_entry() {
        let e = env("sticky-ridge");
        let v = 0.4;
        let st = e.state_at(&[3.5, v]).unwrap();
        let r = e.step(&st, &[0.0]).unwrap();
        // v' = 0.2 · (v − dt·drag·v)
        assert!(r.next_state.s[1].abs() <= 0.2 * v);
        // a fast car passes undamped
        let fast = e.state_at(&[3.5, 1.5]).unwrap();
        let r = e.step(&fast, &[0.0]).unwrap();
        assert!(r.next_state.s[1] > 1.4);
    }

    #[test]
    fn pendulum_never_terminates_and_actions_are_clipped() {
        let e = env("pendulum-balance");
        let mut st = e.reference_state();
        while st.t < e.horizon {
            let r = e.step(&st, &[50.0]).unwrap();
            assert!(!r.next_state.terminated);
            let clipped = e.step(&st, &[e.action_bound]).unwrap();
            assert_eq!(r, clipped);
            st = r.next_state;
        }
    }

    #[test]
    fn done_flag_at_horizon() {
        let e = env("sticky-ridge");
        let st = EnvState { s: vec![0.0, 0.0], t: e.horizon - 1, terminated: false };
        let r = e.step(&st, &[0.0]).unwrap();
        assert!(r.done && !r.next_state.terminated);
    }
}
