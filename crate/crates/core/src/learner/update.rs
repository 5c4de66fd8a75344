//! Single-draw update functions θ' = u(θ, X).

use std::sync::Arc;

use super::td3::{actor_loss_grad, Td3State};
use crate::error::{Error, Result};
use crate::policy::{perturb, MlpShape, ParamVector};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateFamily {
    /// One actor Adam step on a random replay minibatch, critics frozen.
    /// The learner's actor moments are used but not modified.
    Td3Minibatch { batch_size: usize, lr: f64 },
    /// θ + ε, ε ~ N(0, sigma² I).
    GaussianPerturbation { sigma: f64 },
    /// One SGD step on the squared error to a teacher's actions over a
    /// minibatch of logged states (flat, `state_dim` stride).
    BcMinibatch {
        teacher_shape: Arc<MlpShape>,
        teacher: Arc<ParamVector>,
        states: Arc<Vec<f64>>,
        batch_size: usize,
        lr: f64,
    },
}

impl UpdateFamily {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateFamily::Td3Minibatch { .. } => "td3-minibatch",
            UpdateFamily::GaussianPerturbation { .. } => "gaussian-perturbation",
            UpdateFamily::BcMinibatch { .. } => "bc-minibatch",
        }
    }

    pub fn requires_learner(&self) -> bool {
        matches!(self, UpdateFamily::Td3Minibatch { .. })
    }
}

/// The point being updated and, when needed, the learner around it.
#[derive(Debug, Clone, Copy)]
pub struct UpdateSource<'a> {
    pub shape: &'a MlpShape,
    pub actor: &'a ParamVector,
    pub learner: Option<&'a Td3State>,
}

impl<'a> UpdateSource<'a> {
    pub fn policy(shape: &'a MlpShape, actor: &'a ParamVector) -> Self {
        Self { shape, actor, learner: None }
    }

    pub fn learner(shape: &'a MlpShape, state: &'a Td3State) -> Self {
        Self { shape, actor: &state.actor, learner: Some(state) }
    }
}

/// Draws X from `rng` and returns u(θ, X).
pub fn sample_update(fam: &UpdateFamily, src: UpdateSource<'_>, rng: &mut RngStream) -> Result<ParamVector> {
    match fam {
        UpdateFamily::GaussianPerturbation { sigma } => {
            if *sigma < 0.0 {
                return Err(Error::InvalidConfig("sigma must be >= 0".into()));
            }
            Ok(perturb(src.actor, *sigma, rng))
        }
        UpdateFamily::Td3Minibatch { batch_size, lr } => {
            let st = src.learner.ok_or(Error::MissingLearnerState("td3-minibatch"))?;
            if st.actor.shape_id() != src.actor.shape_id() || st.actor.len() != src.actor.len() {
                return Err(Error::ShapeMismatch("probe actor does not match learner".into()));
            }
            let idx = st.buffer.sample_indices(*batch_size, rng)?;
            let states = st.buffer.gather_states(&idx);
            let (_, grad) = actor_loss_grad(
                &st.actor_shape(),
                &st.critic_shape(),
                src.actor.values(),
                st.critic1.values(),
                &states,
            );
            let mut theta = src.actor.clone();
            let mut opt = st.actor_opt.clone();
            let adam = st.cfg.adam(*lr);
            opt.step(&adam, *lr, theta.values_mut(), &grad);
            Ok(theta)
        }
        UpdateFamily::BcMinibatch { teacher_shape, teacher, states, batch_size, lr } => {
            let shape = src.shape;
            if teacher.len() != teacher_shape.param_count()
                || teacher_shape.input_dim != shape.input_dim
                || teacher_shape.output_dim != shape.output_dim
            {
                return Err(Error::ShapeMismatch("teacher is incompatible with the student".into()));
            }
            let dim = shape.input_dim;
            let n_states = states.len() / dim;
            if n_states == 0 {
                return Err(Error::InsufficientBuffer { have: 0, need: 1 });
            }
            let batch: Vec<Vec<f64>> = (0..*batch_size)
                .map(|_| {
                    let i = rng.below(n_states);
                    states[i * dim..(i + 1) * dim].to_vec()
                })
                .collect();
            let (_, grad) = bc_loss_grad_with(shape, src.actor.values(), teacher_shape, teacher.values(), &batch);
            let mut theta = src.actor.clone();
            for (p, g) in theta.values_mut().iter_mut().zip(&grad) {
                *p -= lr * g;
            }
            Ok(theta)
        }
    }
}

/// Mean over the batch of `‖π(s) − π_teacher(s)‖²`, and its gradient,
/// with teacher and student sharing one shape.
pub fn bc_loss_grad(shape: &MlpShape, student: &[f64], teacher: &[f64], states: &[Vec<f64>]) -> (f64, Vec<f64>) {
    bc_loss_grad_with(shape, student, shape, teacher, states)
}

/// As [`bc_loss_grad`] for a teacher of a different shape.
pub fn bc_loss_grad_with(
    shape: &MlpShape,
    student: &[f64],
    teacher_shape: &MlpShape,
    teacher: &[f64],
    states: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let n = states.len() as f64;
    let mut grad = vec![0.0; student.len()];
    let mut loss = 0.0;
    let mut target = Vec::new();
    let mut tmp = Vec::new();
    for s in states {
        teacher_shape.forward_raw(teacher, s, &mut target, &mut tmp);
        let cache = shape.forward_cached(student, s);
        let d: Vec<f64> = cache.output().iter().zip(&target).map(|(y, t)| y - t).collect();
        loss += d.iter().map(|x| x * x).sum::<f64>() / n;
        let d_out: Vec<f64> = d.iter().map(|x| 2.0 * x / n).collect();
        shape.backward(student, &cache, &d_out, &mut grad);
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::env_by_name;
    use crate::learner::td3::{td3_train, Td3Config};

    fn learner() -> Td3State {
        let env = env_by_name("corridor-walk").unwrap();
        let cfg = Td3Config {
            hidden: vec![8, 8],
            total_steps: 300,
            start_steps: 50,
            batch_size: 16,
            buffer_capacity: 500,
            ..Td3Config::default()
        };
        td3_train(&env, &cfg, 0, "h").unwrap().final_state
    }

    #[test]
    fn zero_sigma_is_identity() {
        let shape = MlpShape::policy(2, 1, &[4], 1.0);
        let theta = shape.init(&mut RngStream::root(0));
        let fam = UpdateFamily::GaussianPerturbation { sigma: 0.0 };
        let out = sample_update(&fam, UpdateSource::policy(&shape, &theta), &mut RngStream::root(1)).unwrap();
        assert_eq!(out, theta);
    }

    #[test]
    fn td3_probe_zero_lr_is_identity_and_pure() {
        let st = learner();
        let shape = st.actor_shape();
        let src = UpdateSource::learner(&shape, &st);
        let zero = UpdateFamily::Td3Minibatch { batch_size: 16, lr: 0.0 };
        assert_eq!(sample_update(&zero, src, &mut RngStream::root(3)).unwrap(), st.actor);
        let fam = UpdateFamily::Td3Minibatch { batch_size: 16, lr: 3e-4 };
        let a = sample_update(&fam, src, &mut RngStream::root(3)).unwrap();
        let b = sample_update(&fam, src, &mut RngStream::root(3)).unwrap();
        assert_eq!(a.to_le_bytes(), b.to_le_bytes());
        assert_ne!(a, st.actor);
        let c = sample_update(&fam, src, &mut RngStream::root(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn td3_probe_needs_learner_and_buffer() {
        let shape = MlpShape::policy(4, 2, &[8, 8], 1.0);
        let theta = shape.init(&mut RngStream::root(0));
        let fam = UpdateFamily::Td3Minibatch { batch_size: 16, lr: 1e-3 };
        let r = sample_update(&fam, UpdateSource::policy(&shape, &theta), &mut RngStream::root(0));
        assert!(matches!(r, Err(Error::MissingLearnerState(_))));
        let st = learner();
        let big = UpdateFamily::Td3Minibatch { batch_size: 10_000, lr: 1e-3 };
        let r = sample_update(&big, UpdateSource::learner(&shape, &st), &mut RngStream::root(0));
        assert!(matches!(r, Err(Error::InsufficientBuffer { .. })));
    }

    #[test]
    fn bc_teacher_equal_student_is_fixed_point() {
        let shape = MlpShape::policy(3, 2, &[8], 1.0);
        let theta = shape.init(&mut RngStream::root(6));
        let states: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let fam = UpdateFamily::BcMinibatch {
            teacher_shape: Arc::new(shape.clone()),
            teacher: Arc::new(theta.clone()),
            states: Arc::new(states.clone()),
            batch_size: 8,
            lr: 0.1,
        };
        let batch: Vec<Vec<f64>> = states.chunks(3).map(|c| c.to_vec()).collect();
        let (loss, grad) = bc_loss_grad(&shape, theta.values(), theta.values(), &batch);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        let out = sample_update(&fam, UpdateSource::policy(&shape, &theta), &mut RngStream::root(1)).unwrap();
        assert_eq!(out, theta);
    }
}
