//! Shared-trunk multi-task network.
//!
//! The trunk is a stack of dense `tanh` layers used by every task; each task
//! owns a linear output head on top of the last trunk layer. All parameters
//! live in one flat [`ParamVector`] laid out as
//!
//! ```text
//! [trunk_0.W, trunk_0.b, trunk_1.W, trunk_1.b, ..., head_0.W, head_0.b, ..., head_K.W, head_K.b]
//! ```
//!
//! with weight matrices stored row-major as `out x in`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamVector};

/// Half-width of the uniform range used for parameter initialization.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` (and input `z`).
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output space of one task and the negative log-likelihood used for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskKind {
    /// Unit-variance Gaussian likelihood: loss `½‖ŷ − y‖²` per example.
    Regression { outputs: usize },
    /// Categorical likelihood over softmax logits: cross-entropy per example.
    /// Targets are a single column holding the class index.
    Classification { classes: usize },
}

impl TaskKind {
    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Regression { outputs } => outputs,
            TaskKind::Classification { classes } => classes,
        }
    }

    /// Number of target columns a dataset of this kind carries.
    pub fn target_cols(self) -> usize {
        match self {
            TaskKind::Regression { outputs } => outputs,
            TaskKind::Classification { .. } => 1,
        }
    }

    /// Checks that `targets` is well-formed for this task kind.
    pub fn validate_targets(self, targets: &Matrix) -> Result<()> {
        if targets.cols() != self.target_cols() {
            return Err(Error::dim(format!(
                "expected {} target column(s), got {}",
                self.target_cols(),
                targets.cols()
            )));
        }
        if !targets.is_finite() {
            return Err(Error::numeric("targets contain non-finite values"));
        }
        if let TaskKind::Classification { classes } = self {
            for (i, &y) in targets.data().iter().enumerate() {
                if y.fract() != 0.0 || y < 0.0 || y >= classes as f64 {
                    return Err(Error::arg(format!(
                        "row {i}: class label {y} is not an integer in [0, {classes})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Architecture descriptor; serialized next to checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub heads: Vec<TaskKind>,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.outputs * self.inputs]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.outputs * self.inputs;
        &p[start..start + self.outputs]
    }

    fn forward(&self, p: &[f64], x: &[f64], out: &mut Vec<f64>) {
        let w = self.weights(p);
        let b = self.bias(p);
        out.clear();
        out.extend((0..self.outputs).map(|o| {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }));
    }

    /// Accumulates `dz ⊗ x` into the weight block and `dz` into the bias block
    /// of `grad`, then writes `Wᵀ dz` into `dx`.
    fn backward(&self, p: &[f64], x: &[f64], dz: &[f64], grad: &mut [f64], dx: &mut Vec<f64>) {
        let w = self.weights(p);
        let (gw, gb) = grad[self.offset..self.offset + self.len()].split_at_mut(self.outputs * self.inputs);
        dx.clear();
        dx.resize(self.inputs, 0.0);
        for o in 0..self.outputs {
            let d = dz[o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += d * x[i];
                dx[i] += row[i] * d;
            }
        }
    }
}

/// One task's minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Minibatch {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub task_id: usize,
}

impl Minibatch {
    pub fn new(inputs: Matrix, targets: Matrix, task_id: usize) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::arg("minibatch must contain at least one row"));
        }
        if inputs.rows() != targets.rows() {
            return Err(Error::dim(format!(
                "minibatch has {} input rows but {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        if !inputs.is_finite() || !targets.is_finite() {
            return Err(Error::numeric("minibatch contains non-finite values"));
        }
        Ok(Minibatch {
            inputs,
            targets,
            task_id,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MtlModel {
    shape: ModelShape,
    trunk: Vec<Dense>,
    heads: Vec<Dense>,
    params: ParamVector,
}

impl MtlModel {
    /// Zero-initialized model.
    pub fn new(shape: ModelShape) -> Result<Self> {
        if shape.input_dim == 0 {
            return Err(Error::arg("input_dim must be >= 1"));
        }
        if shape.heads.is_empty() {
            return Err(Error::arg("model needs at least one task head"));
        }
        if shape.hidden.contains(&0) {
            return Err(Error::arg("hidden layer widths must be >= 1"));
        }
        if shape.heads.iter().any(|h| h.output_dim() == 0) {
            return Err(Error::arg("task heads need at least one output"));
        }
        if shape
            .heads
            .iter()
            .any(|h| matches!(h, TaskKind::Classification { classes } if *classes < 2))
        {
            return Err(Error::arg("classification heads need at least two classes"));
        }
        let mut offset = 0;
        let mut width = shape.input_dim;
        let mut trunk = Vec::with_capacity(shape.hidden.len());
        for &h in &shape.hidden {
            let d = Dense {
                inputs: width,
                outputs: h,
                offset,
            };
            offset += d.len();
            trunk.push(d);
            width = h;
        }
        let mut heads = Vec::with_capacity(shape.heads.len());
        for kind in &shape.heads {
            let d = Dense {
                inputs: width,
                outputs: kind.output_dim(),
                offset,
            };
            offset += d.len();
            heads.push(d);
        }
        Ok(MtlModel {
            shape,
            trunk,
            heads,
            params: ParamVector::zeros(offset),
        })
    }

    /// Model with parameters drawn uniformly from `[−INIT_SCALE, INIT_SCALE]`.
    pub fn new_random<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        let mut m = MtlModel::new(shape)?;
        for p in m.params.iter_mut() {
            *p = rng.random_range(-INIT_SCALE..=INIT_SCALE);
        }
        Ok(m)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        self.check_params(&params)?;
        if !params.is_finite() {
            return Err(Error::numeric("refusing non-finite parameters"));
        }
        self.params = params;
        Ok(())
    }

    pub fn trunk_range(&self) -> Range<usize> {
        0..self.heads[0].offset
    }

    pub fn head_range(&self, task: usize) -> Range<usize> {
        let h = self.heads[task];
        h.offset..h.offset + h.len()
    }

    pub fn task_kind(&self, task: usize) -> Option<TaskKind> {
        self.shape.heads.get(task).copied()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim(format!(
                "model has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, mb: &Minibatch) -> Result<TaskKind> {
        let kind = self.task_kind(mb.task_id).ok_or_else(|| {
            Error::arg(format!(
                "task id {} out of range for a {}-task model",
                mb.task_id,
                self.num_tasks()
            ))
        })?;
        if mb.inputs.cols() != self.shape.input_dim {
            return Err(Error::dim(format!(
                "model expects {} input features, minibatch has {}",
                self.shape.input_dim,
                mb.inputs.cols()
            )));
        }
        if mb.targets.cols() != kind.target_cols() {
            return Err(Error::dim(format!(
                "task {} expects {} target column(s), minibatch has {}",
                mb.task_id,
                kind.target_cols(),
                mb.targets.cols()
            )));
        }
        Ok(kind)
    }

    /// Mean negative log-likelihood of `mb` under the current parameters.
    pub fn forward_loss(&self, mb: &Minibatch) -> Result<f64> {
        self.loss_with(&self.params, mb)
    }

    /// Mean negative log-likelihood of `mb` under `params` (same layout as
    /// this model's parameters).
    pub fn loss_with(&self, params: &[f64], mb: &Minibatch) -> Result<f64> {
        self.check_params(params)?;
        let kind = self.check_batch(mb)?;
        let mut acts = Activations::new(self.trunk.len());
        let mut total = 0.0;
        for r in 0..mb.len() {
            let out = self.forward_example(params, mb.inputs.row(r), mb.task_id, &mut acts);
            total += example_loss(kind, out, mb.targets.row(r)).0;
        }
        let loss = total / mb.len() as f64;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss on task {}", mb.task_id)));
        }
        Ok(loss)
    }

    /// Mean loss and its exact gradient with respect to the parameters.
    pub fn backward_grad(&self, mb: &Minibatch) -> Result<(f64, ParamVector)> {
        self.grad_with(&self.params, mb)
    }

    pub fn grad_with(&self, params: &[f64], mb: &Minibatch) -> Result<(f64, ParamVector)> {
        self.check_params(params)?;
        let kind = self.check_batch(mb)?;
        let mut grad = ParamVector::zeros(params.len());
        let mut acts = Activations::new(self.trunk.len());
        let mut dz = Vec::new();
        let mut da = Vec::new();
        let mut total = 0.0;
        let head = self.heads[mb.task_id];
        for r in 0..mb.len() {
            let out = self.forward_example(params, mb.inputs.row(r), mb.task_id, &mut acts);
            let (loss, d_out) = example_loss(kind, out, mb.targets.row(r));
            total += loss;
            head.backward(params, acts.last(mb.inputs.row(r)), &d_out, &mut grad, &mut da);
            for l in (0..self.trunk.len()).rev() {
                let layer = self.trunk[l];
                dz.clear();
                dz.extend(
                    acts.pre[l]
                        .iter()
                        .zip(&acts.post[l])
                        .zip(&da)
                        .map(|((&z, &a), &g)| g * self.shape.activation.derivative(z, a)),
                );
                let input = if l == 0 {
                    mb.inputs.row(r)
                } else {
                    &acts.post[l - 1][..]
                };
                layer.backward(params, input, &dz, &mut grad, &mut da);
            }
        }
        let scale = 1.0 / mb.len() as f64;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        let loss = total * scale;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite loss or gradient on task {}",
                mb.task_id
            )));
        }
        Ok((loss, grad))
    }

    fn forward_example<'a>(&self, params: &[f64], x: &[f64], task: usize, acts: &'a mut Activations) -> &'a [f64] {
        for (l, spec) in self.trunk.iter().enumerate() {
            let layer = *spec;
            let (done, rest) = acts.post.split_at_mut(l);
            let input = if l == 0 { x } else { &done[l - 1][..] };
            layer.forward(params, input, &mut acts.pre[l]);
            let post = &mut rest[0];
            post.clear();
            post.extend(acts.pre[l].iter().map(|&z| self.shape.activation.apply(z)));
        }
        let head = self.heads[task];
        let input = if self.trunk.is_empty() {
            x
        } else {
            &acts.post[self.trunk.len() - 1][..]
        };
        head.forward(params, input, &mut acts.out);
        &acts.out
    }
}

struct Activations {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl Activations {
    fn new(layers: usize) -> Self {
        Activations {
            pre: vec![Vec::new(); layers],
            post: vec![Vec::new(); layers],
            out: Vec::new(),
        }
    }

    fn last<'a>(&'a self, x: &'a [f64]) -> &'a [f64] {
        self.post.last().map_or(x, |v| &v[..])
    }
}

/// Per-example NLL and its derivative with respect to the head outputs.
fn example_loss(kind: TaskKind, out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    match kind {
        TaskKind::Regression { .. } => {
            let d: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
            (0.5 * d.iter().map(|v| v * v).sum::<f64>(), d)
        }
        TaskKind::Classification { .. } => {
            let y = target[0] as usize;
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = out.iter().map(|o| (o - max).exp()).sum();
            let lse = max + sum.ln();
            let mut d: Vec<f64> = out.iter().map(|o| (o - lse).exp()).collect();
            d[y] -= 1.0;
            (lse - out[y], d)
        }
    }
}

pub fn forward_loss(model: &MtlModel, mb: &Minibatch) -> Result<f64> {
    model.forward_loss(mb)
}

pub fn backward_grad(model: &MtlModel, mb: &Minibatch) -> Result<(f64, ParamVector)> {
    model.backward_grad(mb)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::arg(format!("unknown optimizer `{s}`"))),
        }
    }
}

/// SGD or Adam with bias correction. Moments are allocated lazily for Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::with_kind(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::with_kind(OptimizerKind::Adam, learning_rate)
    }

    pub fn with_kind(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::dim(format!(
                "optimizer: {} parameters but {} gradient entries",
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient entry {i}")));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                } else if self.m.len() != params.len() {
                    return Err(Error::dim(format!(
                        "optimizer moments have length {}, parameters {}",
                        self.m.len(),
                        params.len()
                    )));
                }
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::step`].
pub fn optimizer_step(
    state: &OptimizerState,
    params: &ParamVector,
    grad: &ParamVector,
) -> Result<(ParamVector, OptimizerState)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.step(&mut params, grad)?;
    Ok((params, state))
}
