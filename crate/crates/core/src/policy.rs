//! Deterministic MLP policies over flat parameter vectors.
//!
//! Flattening order is layer-major. Within a layer the weight matrix comes
//! first, row-major with one row per output unit (`W[o][i]` at
//! `offset + o * fan_in + i`), followed by the `fan_out` biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    /// `scale · tanh(z)`; used by policies with `scale` = action bound.
    Tanh,
    /// Identity; used by critics.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub output: OutputActivation,
    pub output_scale: f64,
}

/// Fingerprint of a shape; raw vectors not tied to a network use [`ShapeId::FLAT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeId(pub u64);

impl ShapeId {
    pub const FLAT: ShapeId = ShapeId(0);
}

/// A point θ in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    shape_id: ShapeId,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shape_id: ShapeId) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self { values, shape_id })
    }

    /// Unstructured vector (synthetic landscapes, directions).
    pub fn flat(values: Vec<f64>) -> Self {
        Self { values, shape_id: ShapeId::FLAT }
    }

    pub fn zeros(len: usize, shape_id: ShapeId) -> Self {
        Self { values: vec![0.0; len], shape_id }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape_id(&self) -> ShapeId {
        self.shape_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.shape_id != other.shape_id || self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "{:?}/{} vs {:?}/{}",
                self.shape_id,
                self.len(),
                other.shape_id,
                other.len()
            )));
        }
        Ok(())
    }

    /// `self − other`, elementwise.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ParamVector { values, shape_id: self.shape_id })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Little-endian byte image, used for bitwise comparisons.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// `w1·p1 + w2·p2` elementwise.
pub fn combine(p1: &ParamVector, w1: f64, p2: &ParamVector, w2: f64) -> Result<ParamVector> {
    p1.check_compatible(p2)?;
    let values = p1.values.iter().zip(&p2.values).map(|(a, b)| w1 * a + w2 * b).collect();
    Ok(ParamVector { values, shape_id: p1.shape_id })
}

/// `alpha·p1 + (1 − alpha)·p2`, exact at both endpoints.
pub fn lerp(p1: &ParamVector, p2: &ParamVector, alpha: f64) -> Result<ParamVector> {
    p1.check_compatible(p2)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("lerp alpha {alpha} outside [0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(p1.clone());
    }
    if alpha == 0.0 {
        return Ok(p2.clone());
    }
    combine(p1, alpha, p2, 1.0 - alpha)
}

/// `p + ε` with ε ~ N(0, sigma²) i.i.d.
pub fn perturb(p: &ParamVector, sigma: f64, rng: &mut RngStream) -> ParamVector {
    if sigma == 0.0 {
        return p.clone();
    }
    let values = p.values.iter().map(|v| v + sigma * rng.normal()).collect();
    ParamVector { values, shape_id: p.shape_id }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l + 1]` the post-activation output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Post-ReLU hidden activations, for kink detection in gradient checks.
    pub fn hidden(&self) -> &[Vec<f64>] {
        let n = self.acts.len();
        if n <= 2 {
            &[]
        } else {
            &self.acts[1..n - 1]
        }
    }
}

impl MlpShape {
    /// Policy network with tanh output scaled by `action_bound`.
    pub fn policy(state_dim: usize, action_dim: usize, hidden: &[usize], action_bound: f64) -> Self {
        Self {
            input_dim: state_dim,
            output_dim: action_dim,
            hidden: hidden.to_vec(),
            output: OutputActivation::Tanh,
            output_scale: action_bound,
        }
    }

    /// Scalar-output critic over `(state, action)`.
    pub fn critic(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        Self {
            input_dim: state_dim + action_dim,
            output_dim: 1,
            hidden: hidden.to_vec(),
            output: OutputActivation::Linear,
            output_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!("degenerate network shape {}", self.descriptor())));
        }
        if !(self.output_scale > 0.0) {
            return Err(Error::InvalidConfig("output scale must be > 0".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    /// Canonical text form, e.g. `mlp:4-32-32-2:tanh*1`.
    pub fn descriptor(&self) -> String {
        let mut dims = vec![self.input_dim.to_string()];
        dims.extend(self.hidden.iter().map(|h| h.to_string()));
        dims.push(self.output_dim.to_string());
        let out = match self.output {
            OutputActivation::Tanh => format!("tanh*{}", self.output_scale),
            OutputActivation::Linear => "linear".to_string(),
        };
        format!("mlp:{}:{}", dims.join("-"), out)
    }

    pub fn id(&self) -> ShapeId {
        // FNV-1a; never 0 for non-empty descriptors in practice, 1 reserved as fallback
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.descriptor().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        ShapeId(if h == 0 { 1 } else { h })
    }

    fn check_params(&self, p: &ParamVector) -> Result<()> {
        if p.shape_id != self.id() {
            return Err(Error::ShapeMismatch(format!("vector is not shaped as {}", self.descriptor())));
        }
        if p.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: p.len() });
        }
        Ok(())
    }

    /// Fan-in scaled uniform initialization: every entry of a layer with
    /// fan-in `f` is drawn from U(−1/√f, 1/√f).
    pub fn init(&self, rng: &mut RngStream) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layers() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..(fan_in + 1) * fan_out {
                values.push(rng.uniform_in(-bound, bound));
            }
        }
        ParamVector { values, shape_id: self.id() }
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(self.param_count(), self.id())
    }

    pub fn forward(&self, p: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(p)?;
        if x.len() != self.input_dim {
            return Err(Error::Dimension { expected: self.input_dim, got: x.len() });
        }
        let mut out = Vec::new();
        self.forward_raw(&p.values, x, &mut out, &mut Vec::new());
        Ok(out)
    }

    /// Unchecked forward pass into caller-provided buffers.
    pub fn forward_raw(&self, w: &[f64], x: &[f64], out: &mut Vec<f64>, tmp: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut off = 0;
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            std::mem::swap(out, tmp);
            out.clear();
            let bias = off + fan_in * fan_out;
            for o in 0..fan_out {
                let row = &w[off + o * fan_in..off + (o + 1) * fan_in];
                let mut z = w[bias + o];
                for (wi, xi) in row.iter().zip(tmp.iter()) {
                    z += wi * xi;
                }
                out.push(if l == last { self.output_fn(z) } else { z.max(0.0) });
            }
            off = bias + fan_out;
        }
    }

    fn output_fn(&self, z: f64) -> f64 {
        match self.output {
            OutputActivation::Tanh => self.output_scale * z.tanh(),
            OutputActivation::Linear => z,
        }
    }

    /// Forward pass retaining activations.
    pub fn forward_cached(&self, w: &[f64], x: &[f64]) -> ForwardCache {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let input = &acts[l];
            let bias = off + fan_in * fan_out;
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &w[off + o * fan_in..off + (o + 1) * fan_in];
                let mut z = w[bias + o];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    z += wi * xi;
                }
                out.push(if l == last { self.output_fn(z) } else { z.max(0.0) });
            }
            acts.push(out);
            off = bias + fan_out;
        }
        ForwardCache { acts }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the network output).
    ///
    /// Adds the parameter gradient into `grad` and returns the gradient with
    /// respect to the input.
    pub fn backward(&self, w: &[f64], cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for &(fan_in, fan_out) in &layers {
            offsets.push(off);
            off += (fan_in + 1) * fan_out;
        }
        // gradient w.r.t. pre-activation of the current layer
        let y = cache.output();
        let mut dz: Vec<f64> = match self.output {
            OutputActivation::Tanh => d_out
                .iter()
                .zip(y)
                .map(|(g, yv)| {
                    let t = yv / self.output_scale;
                    g * self.output_scale * (1.0 - t * t)
                })
                .collect(),
            OutputActivation::Linear => d_out.to_vec(),
        };
        for l in (0..=last).rev() {
            let (fan_in, fan_out) = layers[l];
            let off = offsets[l];
            let bias = off + fan_in * fan_out;
            let input = &cache.acts[l];
            let mut d_in = vec![0.0; fan_in];
            for o in 0..fan_out {
                let g = dz[o];
                if g == 0.0 {
                    continue;
                }
                grad[bias + o] += g;
                let row = off + o * fan_in;
                for i in 0..fan_in {
                    grad[row + i] += g * input[i];
                    d_in[i] += g * w[row + i];
                }
            }
            if l > 0 {
                // ReLU derivative; input here is the post-ReLU activation
                for (d, a) in d_in.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dz = d_in;
        }
        dz
    }
}
