//! Twin-delayed deep deterministic policy gradient with handwritten backprop.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::replay::{Batch, BufferMark, ReplayBuffer, Transition};
use super::Checkpoint;
use crate::env::{EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::policy::{ForwardCache, MlpShape, ParamVector};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub total_steps: u64,
    pub n_checkpoints: usize,
    /// Uniform-random actions before this many environment steps.
    pub start_steps: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub discount: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// EMA coefficient: `target ← tau·target + (1 − tau)·online`.
    pub tau: f64,
    pub exploration_noise: f64,
    pub policy_delay: u64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    /// Attach the full learner state to every checkpoint.
    pub keep_full_state: bool,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            total_steps: 200_000,
            n_checkpoints: 10,
            start_steps: 1_000,
            batch_size: 64,
            buffer_capacity: 100_000,
            discount: 0.99,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1.5e-4,
            tau: 0.995,
            exploration_noise: 0.1,
            policy_delay: 2,
            policy_noise: 0.2,
            noise_clip: 0.5,
            keep_full_state: true,
        }
    }
}

impl Td3Config {
    /// Full-scale settings: 2×256 networks, batch 256, 10^6 replay.
    pub fn full_scale() -> Self {
        Self { hidden: vec![256, 256], batch_size: 256, buffer_capacity: 1_000_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("td3: {m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be >= 1");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.discount) {
            return bad("tau and discount must lie in [0, 1]");
        }
        if self.n_checkpoints == 0 {
            return bad("n_checkpoints must be >= 1");
        }
        Ok(())
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    /// Evenly spaced checkpoint steps: first at `total / (2n)`, then every `total / n`.
    pub fn checkpoint_steps(&self) -> Vec<u64> {
        let n = self.n_checkpoints as u64;
        let spacing = self.total_steps / n;
        let first = self.total_steps / (2 * n);
        (0..n).map(|k| first + k * spacing).filter(|s| *s > 0).collect()
    }
}

/// Everything a TD3 learner needs to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3State {
    pub env: EnvSpec,
    pub cfg: Td3Config,
    pub actor: ParamVector,
    pub critic1: ParamVector,
    pub critic2: ParamVector,
    pub target_actor: ParamVector,
    pub target_critic1: ParamVector,
    pub target_critic2: ParamVector,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    pub rng: RngStream,
    pub buffer: ReplayBuffer,
    pub env_state: EnvState,
    pub env_steps: u64,
    pub updates: u64,
    pub episode_return: f64,
    pub episodes: u64,
}

/// Pre-proposal copy of a [`Td3State`] plus the open replay mark.
#[derive(Debug)]
pub struct Td3Snapshot {
    saved: Box<Td3State>,
    mark: BufferMark,
}

/// Losses from one critic (and possibly actor) update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

impl Td3State {
    pub fn new(env: &EnvSpec, cfg: &Td3Config, seed: u64) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        let root = RngStream::root(seed);
        let init = root.child("init");
        let actor_shape = MlpShape::policy(env.state_dim, env.action_dim, &cfg.hidden, env.action_bound);
        let critic_shape = MlpShape::critic(env.state_dim, env.action_dim, &cfg.hidden);
        let actor = actor_shape.init(&mut init.child("actor"));
        let critic1 = critic_shape.init(&mut init.child("critic1"));
        let critic2 = critic_shape.init(&mut init.child("critic2"));
        let mut rng = root.child("learner");
        let env_state = env.reset(&mut rng);
        Ok(Self {
            env: env.clone(),
            cfg: cfg.clone(),
            target_actor: actor.clone(),
            target_critic1: critic1.clone(),
            target_critic2: critic2.clone(),
            actor_opt: AdamState::new(actor.len()),
            critic1_opt: AdamState::new(critic1.len()),
            critic2_opt: AdamState::new(critic2.len()),
            actor,
            critic1,
            critic2,
            rng,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, env.state_dim, env.action_dim)?,
            env_state,
            env_steps: 0,
            updates: 0,
            episode_return: 0.0,
            episodes: 0,
        })
    }

    pub fn actor_shape(&self) -> MlpShape {
        MlpShape::policy(self.env.state_dim, self.env.action_dim, &self.cfg.hidden, self.env.action_bound)
    }

    pub fn critic_shape(&self) -> MlpShape {
        MlpShape::critic(self.env.state_dim, self.env.action_dim, &self.cfg.hidden)
    }

    /// One environment interaction, stored in the replay buffer.
    pub fn env_step(&mut self, rng: &mut RngStream) -> Result<()> {
        let b = self.env.action_bound;
        let action: Vec<f64> = if self.env_steps < self.cfg.start_steps {
            (0..self.env.action_dim).map(|_| rng.uniform_in(-b, b)).collect()
        } else {
            let mean = self.actor_shape().forward(&self.actor, &self.env_state.s)?;
            mean.iter()
                .map(|m| (m + self.cfg.exploration_noise * b * rng.normal()).clamp(-b, b))
                .collect()
        };
        let res = self.env.step(&self.env_state, &action)?;
        self.buffer.push(Transition {
            s: self.env_state.s.clone(),
            a: action,
            r: res.reward,
            s_next: res.next_state.s.clone(),
            done: res.next_state.terminated,
        })?;
        self.episode_return += res.reward;
        self.env_steps += 1;
        if res.done {
            self.episodes += 1;
            self.episode_return = 0.0;
            self.env_state = self.env.reset(rng);
        } else {
            self.env_state = res.next_state;
        }
        Ok(())
    }

    /// Critic update on one minibatch; every `policy_delay`-th call also
    /// updates the actor. Returns the losses.
    pub fn train_step(&mut self, rng: &mut RngStream) -> Result<UpdateStats> {
        let batch = self.buffer.sample(self.cfg.batch_size, rng)?;
        let critic_loss = self.critic_update(&batch, rng)?;
        self.updates += 1;
        let mut stats = UpdateStats { critic_loss, actor_loss: None };
        if self.updates % self.cfg.policy_delay == 0 {
            let (loss, grad) = actor_loss_grad(
                &self.actor_shape(),
                &self.critic_shape(),
                self.actor.values(),
                self.critic1.values(),
                &batch.states,
            );
            if !loss.is_finite() {
                return Err(self.diverged("actor loss", loss));
            }
            let adam = self.cfg.adam(self.cfg.actor_lr);
            self.actor_opt.step(&adam, adam.lr, self.actor.values_mut(), &grad);
            ema(&mut self.target_actor, &self.actor, self.cfg.tau);
            stats.actor_loss = Some(loss);
        }
        Ok(stats)
    }

    /// One gradient-step proposal: interact and train until the actor has
    /// been updated once.
    pub fn propose(&mut self, rng: &mut RngStream) -> Result<()> {
        loop {
            self.env_step(rng)?;
            if self.buffer.len() < self.cfg.batch_size {
                continue;
            }
            if self.train_step(rng)?.actor_loss.is_some() {
                return Ok(());
            }
        }
    }

    fn critic_update(&mut self, batch: &Batch, rng: &mut RngStream) -> Result<f64> {
        let cfg = &self.cfg;
        let actor_shape = self.actor_shape();
        let critic_shape = self.critic_shape();
        let b = self.env.action_bound;
        let n = batch.rewards.len() as f64;
        let mut out = Vec::new();
        let mut tmp = Vec::new();
        let mut targets = Vec::with_capacity(batch.rewards.len());
        for k in 0..batch.rewards.len() {
            actor_shape.forward_raw(self.target_actor.values(), &batch.next_states[k], &mut out, &mut tmp);
            let mut input = batch.next_states[k].clone();
            for a in out.iter() {
                let noise = (cfg.policy_noise * b * rng.normal()).clamp(-cfg.noise_clip * b, cfg.noise_clip * b);
                input.push((a + noise).clamp(-b, b));
            }
            critic_shape.forward_raw(self.target_critic1.values(), &input, &mut out, &mut tmp);
            let q1 = out[0];
            critic_shape.forward_raw(self.target_critic2.values(), &input, &mut out, &mut tmp);
            let q2 = out[0];
            let not_done = if batch.dones[k] { 0.0 } else { 1.0 };
            targets.push(batch.rewards[k] + cfg.discount * not_done * q1.min(q2));
        }
        let mut total = 0.0;
        for (critic, opt) in [(&mut self.critic1, &mut self.critic1_opt), (&mut self.critic2, &mut self.critic2_opt)] {
            let mut grad = vec![0.0; critic.len()];
            let mut loss = 0.0;
            for k in 0..batch.rewards.len() {
                let mut input = batch.states[k].clone();
                input.extend_from_slice(&batch.actions[k]);
                let cache = critic_shape.forward_cached(critic.values(), &input);
                let err = cache.output()[0] - targets[k];
                loss += err * err / n;
                critic_shape.backward(critic.values(), &cache, &[2.0 * err / n], &mut grad);
            }
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: self.env_steps,
                    detail: format!("critic loss {loss}; updates {}", self.updates),
                });
            }
            let adam = cfg.adam(cfg.critic_lr);
            opt.step(&adam, adam.lr, critic.values_mut(), &grad);
            total += loss;
        }
        ema(&mut self.target_critic1, &self.critic1, cfg.tau);
        ema(&mut self.target_critic2, &self.critic2, cfg.tau);
        Ok(total / 2.0)
    }

    fn diverged(&self, what: &str, value: f64) -> Error {
        Error::Diverged {
            step: self.env_steps,
            detail: format!(
                "{what} = {value}; updates {}; |actor| {:.4e}; |critic1| {:.4e}; |critic2| {:.4e}; buffer {}",
                self.updates,
                self.actor.norm(),
                self.critic1.norm(),
                self.critic2.norm(),
                self.buffer.len()
            ),
        }
    }

    /// Opens a revert point covering networks, optimizers, replay buffer and env cursor.
    pub fn snapshot(&mut self) -> Td3Snapshot {
        let mark = self.buffer.mark();
        // the buffer is restored through the mark, not copied
        let saved = Td3State {
            env: self.env.clone(),
            cfg: self.cfg.clone(),
            actor: self.actor.clone(),
            critic1: self.critic1.clone(),
            critic2: self.critic2.clone(),
            target_actor: self.target_actor.clone(),
            target_critic1: self.target_critic1.clone(),
            target_critic2: self.target_critic2.clone(),
            actor_opt: self.actor_opt.clone(),
            critic1_opt: self.critic1_opt.clone(),
            critic2_opt: self.critic2_opt.clone(),
            rng: self.rng.clone(),
            buffer: ReplayBuffer::new(1, self.env.state_dim, self.env.action_dim).expect("capacity 1"),
            env_state: self.env_state.clone(),
            env_steps: self.env_steps,
            updates: self.updates,
            episode_return: self.episode_return,
            episodes: self.episodes,
        };
        Td3Snapshot { saved: Box::new(saved), mark }
    }

    /// Reverts to `snap`.
    pub fn restore(&mut self, snap: Td3Snapshot) -> Result<()> {
        let Td3Snapshot { saved, mark } = snap;
        if saved.env != self.env || saved.cfg != self.cfg {
            return Err(Error::RevertMismatch("snapshot taken from a different learner".into()));
        }
        self.buffer.rollback(mark)?;
        let mut saved = *saved;
        std::mem::swap(&mut saved.buffer, &mut self.buffer);
        *self = saved;
        Ok(())
    }

    /// Keeps everything done since `snap`.
    pub fn commit(&mut self, snap: Td3Snapshot) -> Result<()> {
        self.buffer.release(snap.mark)
    }

    pub fn to_checkpoint(&self, seed: u64, config_hash: &str, full: bool) -> Checkpoint {
        Checkpoint {
            step: self.env_steps,
            actor: self.actor.clone(),
            shape: self.actor_shape(),
            env_name: self.env.name.clone(),
            seed,
            config_hash: config_hash.to_string(),
            state: full.then(|| Box::new(self.clone())),
        }
    }
}

/// `target ← tau·target + (1 − tau)·online`.
pub fn ema(target: &mut ParamVector, online: &ParamVector, tau: f64) {
    for (t, o) in target.values_mut().iter_mut().zip(online.values()) {
        *t = tau * *t + (1.0 - tau) * o;
    }
}

/// Deterministic-policy-gradient loss `−mean Q1(s, π(s))` and its gradient
/// with respect to the actor parameters.
pub fn actor_loss_grad(
    actor_shape: &MlpShape,
    critic_shape: &MlpShape,
    actor: &[f64],
    critic: &[f64],
    states: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let n = states.len() as f64;
    let mut grad = vec![0.0; actor.len()];
    let mut scratch = vec![0.0; critic.len()];
    let mut loss = 0.0;
    let state_dim = actor_shape.input_dim;
    for s in states {
        let a_cache: ForwardCache = actor_shape.forward_cached(actor, s);
        let mut input = s.clone();
        input.extend_from_slice(a_cache.output());
        let q_cache = critic_shape.forward_cached(critic, &input);
        loss -= q_cache.output()[0] / n;
        let d_input = critic_shape.backward(critic, &q_cache, &[-1.0 / n], &mut scratch);
        actor_shape.backward(actor, &a_cache, &d_input[state_dim..], &mut grad);
    }
    (loss, grad)
}

/// Result of [`td3_train`].
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: Td3State,
}

/// Runs TD3 for `cfg.total_steps` environment steps, one update per step
/// once the buffer holds a minibatch and `start_steps` have elapsed.
pub fn td3_train(env: &EnvSpec, cfg: &Td3Config, seed: u64, config_hash: &str) -> Result<TrainOutcome> {
    let mut state = Td3State::new(env, cfg, seed)?;
    let schedule = cfg.checkpoint_steps();
    let mut checkpoints = Vec::with_capacity(schedule.len());
    let mut rng = state.rng.clone();
    let mut next = 0;
    for _ in 0..cfg.total_steps {
        state.env_step(&mut rng)?;
        if state.env_steps >= cfg.start_steps && state.buffer.len() >= cfg.batch_size {
            state.train_step(&mut rng)?;
        }
        if next < schedule.len() && state.env_steps == schedule[next] {
            state.rng = rng.clone();
            checkpoints.push(state.to_checkpoint(seed, config_hash, cfg.keep_full_state));
            next += 1;
        }
    }
    state.rng = rng;
    Ok(TrainOutcome { checkpoints, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::env_by_name;

    fn small_cfg() -> Td3Config {
        Td3Config {
            hidden: vec![8, 8],
            total_steps: 600,
            start_steps: 100,
            batch_size: 16,
            buffer_capacity: 300,
            ..Td3Config::default()
        }
    }

    #[test]
    fn checkpoint_schedule_shape() {
        let cfg = Td3Config { total_steps: 100_000, ..Td3Config::default() };
        let steps = cfg.checkpoint_steps();
        assert_eq!(steps.len(), 10);
        assert_eq!(steps[0], 5_000);
        assert!(steps.windows(2).all(|w| w[1] - w[0] == 10_000));
        assert_eq!(*steps.last().unwrap(), 95_000);
    }

    #[test]
    fn training_is_deterministic() {
        let env = env_by_name("pendulum-balance").unwrap();
        let a = td3_train(&env, &small_cfg(), 3, "h").unwrap();
        let b = td3_train(&env, &small_cfg(), 3, "h").unwrap();
        assert_eq!(a.final_state.actor.to_le_bytes(), b.final_state.actor.to_le_bytes());
        assert_eq!(a.checkpoints.len(), 10);
        let c = td3_train(&env, &small_cfg(), 4, "h").unwrap();
        assert_ne!(a.final_state.actor, c.final_state.actor);
    }

    #[test]
    fn ema_shrinks_gap_geometrically() {
        let online = ParamVector::flat(vec![1.0, -2.0, 0.5]);
        let mut target = ParamVector::flat(vec![0.0, 0.0, 0.0]);
        let gap0 = target.sub(&online).unwrap().norm();
        let tau: f64 = 0.995;
        for _ in 0..50 {
            ema(&mut target, &online, tau);
        }
        let gap = target.sub(&online).unwrap().norm();
        assert!((gap / gap0 - tau.powi(50)).abs() < 1e-12);
    }

    #[test]
    fn snapshot_restore_is_exact_and_replay_deterministic() {
        let env = env_by_name("corridor-walk").unwrap();
        let out = td3_train(&env, &small_cfg(), 1, "h").unwrap();
        let mut state = out.final_state;
        let before = state.clone();
        let snap = state.snapshot();
        let mut r1 = RngStream::root(77);
        for _ in 0..5 {
            state.propose(&mut r1).unwrap();
        }
        let after_direct = state.actor.clone();
        state.restore(snap).unwrap();
        assert_eq!(state.actor.to_le_bytes(), before.actor.to_le_bytes());
        assert_eq!(state.buffer, before.buffer);
        assert_eq!(state.actor_opt, before.actor_opt);
        let mut r2 = RngStream::root(77);
        for _ in 0..5 {
            state.propose(&mut r2).unwrap();
        }
        assert_eq!(state.actor.to_le_bytes(), after_direct.to_le_bytes());
    }

    #[test]
    fn propose_always_moves_actor() {
        let env = env_by_name("sticky-ridge").unwrap();
        let mut state = td3_train(&env, &small_cfg(), 2, "h").unwrap().final_state;
        let before = state.actor.clone();
        state.propose(&mut RngStream::root(1)).unwrap();
        assert_ne!(before, state.actor);
    }
}
