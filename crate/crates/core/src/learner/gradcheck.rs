//! Central finite-difference validation of the handwritten backprop.

use super::td3::actor_loss_grad;
use super::update::bc_loss_grad;
use crate::policy::{MlpShape, OutputActivation};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedLoss {
    /// Squared error to a random teacher network.
    BcMse,
    /// `−mean Q(s, π(s))` through a random critic.
    Td3Actor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinates compared (|analytic| > 1e-8, no ReLU kink crossed).
    pub compared: usize,
    /// Coordinates whose ±h probe flipped a ReLU.
    pub skipped_kinks: usize,
    pub points: usize,
}

pub const FD_STEP: f64 = 1e-6;
const MIN_GRAD: f64 = 1e-8;
const POINTS: usize = 100;
const BATCH: usize = 4;

/// Max relative error between analytic and central-difference gradients
/// over [`POINTS`] random points.
pub fn gradient_check(shape: &MlpShape, loss: CheckedLoss, seed: u64) -> f64 {
    gradient_check_report(shape, loss, seed, POINTS).max_rel_error
}

pub fn gradient_check_report(shape: &MlpShape, loss: CheckedLoss, seed: u64, points: usize) -> GradCheckReport {
    let root = RngStream::root(seed).child("gradcheck");
    let critic = MlpShape::critic(shape.input_dim, shape.output_dim, &shape.hidden);
    let mut report = GradCheckReport { max_rel_error: 0.0, compared: 0, skipped_kinks: 0, points };
    for k in 0..points {
        let mut rng = root.indexed(k as u64);
        let theta = shape.init(&mut rng).into_values();
        let other = match loss {
            CheckedLoss::BcMse => shape.init(&mut rng).into_values(),
            CheckedLoss::Td3Actor => critic.init(&mut rng).into_values(),
        };
        let states: Vec<Vec<f64>> =
            (0..BATCH).map(|_| (0..shape.input_dim).map(|_| rng.normal()).collect()).collect();
        let eval = |w: &[f64]| -> (f64, Vec<f64>) {
            match loss {
                CheckedLoss::BcMse => bc_loss_grad(shape, w, &other, &states),
                CheckedLoss::Td3Actor => actor_loss_grad(shape, &critic, w, &other, &states),
            }
        };
        let pattern = |w: &[f64]| -> Vec<bool> {
            let mut bits = Vec::new();
            for s in &states {
                let cache = shape.forward_cached(w, s);
                bits.extend(cache.hidden().iter().flatten().map(|a| *a > 0.0));
                if loss == CheckedLoss::Td3Actor {
                    let mut input = s.clone();
                    input.extend_from_slice(cache.output());
                    let q = critic.forward_cached(&other, &input);
                    bits.extend(q.hidden().iter().flatten().map(|a| *a > 0.0));
                }
            }
            bits
        };
        let loss_dd = |w: &[f64]| -> Dd {
            match loss {
                CheckedLoss::BcMse => bc_loss_dd(shape, w, &other, &states),
                CheckedLoss::Td3Actor => actor_loss_dd(shape, &critic, w, &other, &states),
            }
        };
        let (_, analytic) = eval(&theta);
        let base = pattern(&theta);
        let mut w = theta.clone();
        for i in 0..theta.len() {
            if analytic[i].abs() <= MIN_GRAD {
                continue;
            }
            let (up, down) = (theta[i] + FD_STEP, theta[i] - FD_STEP);
            w[i] = up;
            let lp = loss_dd(&w);
            let pp = pattern(&w);
            w[i] = down;
            let lm = loss_dd(&w);
            let pm = pattern(&w);
            w[i] = theta[i];
            if pp != base || pm != base {
                report.skipped_kinks += 1;
                continue;
            }
            // divide by the step actually taken, which is exact in floating point
            let numeric = lp.sub(lm).to_f64() / (up - down);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs());
            report.compared += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
        }
    }
    report
}

/// Double-double value `hi + lo`, used so the finite-difference numerator
/// is not swamped by rounding in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    fn scale(self, k: f64) -> Dd {
        self.mul(Dd::from(k))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.scale(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.scale(q2));
        let (hi, lo) = two_sum(q1, q2);
        Dd { hi, lo: lo + r.hi / o.hi }
    }

    /// e^x: reduce by k·ln2 and 2^10, Taylor series, then square back up.
    fn exp(self) -> Dd {
        const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319046813846299558e-17 };
        if self.hi < -700.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.scale(k)).scale(1.0 / 1024.0);
        let mut sum = Dd::from(1.0);
        let mut term = Dd::from(1.0);
        for n in 1..=12 {
            term = term.mul(r).div(Dd::from(n as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.scale(2f64.powi(k as i32))
    }

    /// libm's tanh is not correctly rounded, and its last-bit error divided
    /// by the finite-difference step swamps gradients near 1e-7.
    fn tanh(self) -> Dd {
        let neg = self.hi < 0.0;
        let a = if neg { self.neg() } else { self };
        let e = a.scale(-2.0).exp();
        let one = Dd::from(1.0);
        let t = one.sub(e).div(one.add(e));
        if neg {
            t.neg()
        } else {
            t
        }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Forward pass in double-double arithmetic.
fn forward_dd(shape: &MlpShape, w: &[f64], x: &[Dd]) -> Vec<Dd> {
    let layers = shape.layers();
    let last = layers.len() - 1;
    let mut act = x.to_vec();
    let mut off = 0;
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let bias = off + fan_in * fan_out;
        let mut out = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let mut z = Dd::from(w[bias + o]);
            for i in 0..fan_in {
                z = z.add(act[i].scale(w[off + o * fan_in + i]));
            }
            out.push(if l < last {
                if z.hi > 0.0 { z } else { Dd::ZERO }
            } else {
                match shape.output {
                    OutputActivation::Linear => z,
                    OutputActivation::Tanh => z.tanh().scale(shape.output_scale),
                }
            });
        }
        act = out;
        off = bias + fan_out;
    }
    act
}

fn bc_loss_dd(shape: &MlpShape, student: &[f64], teacher: &[f64], states: &[Vec<f64>]) -> Dd {
    let mut total = Dd::ZERO;
    for s in states {
        let x: Vec<Dd> = s.iter().map(|v| Dd::from(*v)).collect();
        let y = forward_dd(shape, student, &x);
        let t = forward_dd(shape, teacher, &x);
        for (a, b) in y.iter().zip(&t) {
            let d = a.sub(*b);
            total = total.add(d.mul(d));
        }
    }
    total.scale(1.0 / states.len() as f64)
}

fn actor_loss_dd(shape: &MlpShape, critic: &MlpShape, actor: &[f64], q: &[f64], states: &[Vec<f64>]) -> Dd {
    let mut total = Dd::ZERO;
    for s in states {
        let mut x: Vec<Dd> = s.iter().map(|v| Dd::from(*v)).collect();
        let a = forward_dd(shape, actor, &x);
        x.extend(a);
        total = total.sub(forward_dd(critic, q, &x)[0]);
    }
    total.scale(1.0 / states.len() as f64)
}
