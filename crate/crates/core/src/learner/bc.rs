//! Behavior cloning onto a teacher policy's actions.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::replay::ReplayBuffer;
use super::update::bc_loss_grad_with;
use super::Checkpoint;
use crate::error::{Error, Result};
use crate::policy::MlpShape;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], steps: 5_000, batch_size: 64, lr: 1e-3 }
    }
}

/// Trains a fresh policy by regressing onto the teacher's actions at the
/// buffer's logged states (the logged actions themselves are ignored).
pub fn bc_clone(teacher: &Checkpoint, data: &ReplayBuffer, cfg: &BcConfig, seed: u64) -> Result<Checkpoint> {
    if data.is_empty() {
        return Err(Error::Empty("behavior-cloning dataset"));
    }
    let t = &teacher.shape;
    let (state_dim, action_dim) = data.dims();
    if t.input_dim != state_dim || t.output_dim != action_dim {
        return Err(Error::Dimension { expected: t.input_dim, got: state_dim });
    }
    let shape = MlpShape::policy(state_dim, action_dim, &cfg.hidden, t.output_scale);
    shape.validate()?;
    let root = RngStream::root(seed).child("bc");
    let mut student = shape.init(&mut root.child("init"));
    let mut rng = root.child("batches");
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut opt = AdamState::new(student.len());
    for step in 0..cfg.steps {
        let idx = data.sample_indices(cfg.batch_size.min(data.len()), &mut rng)?;
        let states = data.gather_states(&idx);
        let (loss, grad) = bc_loss_grad_with(&shape, student.values(), t, teacher.actor.values(), &states);
        if !loss.is_finite() {
            return Err(Error::Diverged { step, detail: format!("bc loss {loss}") });
        }
        opt.step(&adam, cfg.lr, student.values_mut(), &grad);
    }
    Ok(Checkpoint {
        step: cfg.steps,
        actor: student,
        shape,
        env_name: teacher.env_name.clone(),
        seed,
        config_hash: teacher.config_hash.clone(),
        state: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::replay::Transition;
    use crate::policy::ParamVector;

    fn dataset(n: usize, seed: u64) -> ReplayBuffer {
        let mut rng = RngStream::root(seed);
        let mut b = ReplayBuffer::new(n, 4, 2).unwrap();
        for _ in 0..n {
            let s: Vec<f64> = (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            b.push(Transition { s: s.clone(), a: vec![0.0, 0.0], r: 0.0, s_next: s, done: false }).unwrap();
        }
        b
    }

    fn constant_teacher() -> Checkpoint {
        let shape = MlpShape::policy(4, 2, &[8], 1.0);
        let mut p = shape.zeros();
        let n = p.len();
        p.values_mut()[n - 2] = 0.4;
        p.values_mut()[n - 1] = -0.7;
        let p = ParamVector::new(p.into_values(), shape.id()).unwrap();
        Checkpoint::from_policy(shape, p, "corridor-walk", 0, 0)
    }

    #[test]
    fn clones_constant_teacher() {
        let teacher = constant_teacher();
        let cfg = BcConfig { hidden: vec![16, 16], steps: 3_000, batch_size: 32, lr: 3e-3 };
        let clone = bc_clone(&teacher, &dataset(500, 1), &cfg, 9).unwrap();
        let held_out = dataset(200, 2);
        let mut err = 0.0;
        for i in 0..held_out.len() {
            let s = held_out.state_at(i).unwrap();
            let want = teacher.shape.forward(&teacher.actor, s).unwrap();
            let got = clone.shape.forward(&clone.actor, s).unwrap();
            err += want.iter().zip(&got).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        }
        assert!(err / held_out.len() as f64 <= 1e-2);
    }

    #[test]
    fn zero_steps_returns_fresh_init_and_is_deterministic() {
        let teacher = constant_teacher();
        let cfg = BcConfig { hidden: vec![8], steps: 0, ..BcConfig::default() };
        let a = bc_clone(&teacher, &dataset(10, 0), &cfg, 4).unwrap();
        let fresh = a.shape.init(&mut RngStream::root(4).child("bc").child("init"));
        assert_eq!(a.actor, fresh);
        let cfg = BcConfig { hidden: vec![8], steps: 20, ..BcConfig::default() };
        let x = bc_clone(&teacher, &dataset(50, 0), &cfg, 4).unwrap();
        let y = bc_clone(&teacher, &dataset(50, 0), &cfg, 4).unwrap();
        assert_eq!(x.actor.to_le_bytes(), y.actor.to_le_bytes());
    }

    #[test]
    fn empty_dataset_rejected() {
        let empty = ReplayBuffer::new(4, 4, 2).unwrap();
        assert!(matches!(bc_clone(&constant_teacher(), &empty, &BcConfig::default(), 0), Err(Error::Empty(_))));
    }
}
