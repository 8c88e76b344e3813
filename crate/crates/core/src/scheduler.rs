//! Scheduler network: moving-average task losses in, task weights out.
//!
//! Two dense layers with a softmax head, trained online to imitate the oracle
//! from a growing replay buffer of `(state, oracle action)` pairs.

use std::collections::VecDeque;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, OptimizerState, INIT_SCALE};
use crate::numcore::{softmax_vec, ParamVector};
use crate::schedules::ImportanceWeights;

pub const DEFAULT_HIDDEN: usize = 200;

/// Moving-average loss per task plus the step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub l_ma: Vec<f64>,
    pub t: u64,
}

impl TrainerState {
    pub fn new(num_tasks: usize) -> Self {
        TrainerState {
            l_ma: vec![0.0; num_tasks],
            t: 0,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.l_ma.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImitationLoss {
    L1,
    Kl,
}

impl FromStr for ImitationLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(ImitationLoss::L1),
            "kl" => Ok(ImitationLoss::Kl),
            _ => Err(Error::arg(format!("unknown imitation loss `{s}`"))),
        }
    }
}

/// Distance between a predicted and a target distribution.
///
/// `L1` is `Σ|p − q|`; `Kl` is `KL(target ‖ pred)` with `0·ln 0 = 0`.
pub fn scheduler_loss(pred: &[f64], target: &[f64], kind: ImitationLoss) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim(format!(
            "prediction has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    let loss = match kind {
        ImitationLoss::L1 => pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum(),
        ImitationLoss::Kl => pred
            .iter()
            .zip(target)
            .filter(|(_, &t)| t > 0.0)
            .map(|(p, t)| t * (t / p).ln())
            .sum(),
    };
    if !f64::is_finite(loss) {
        return Err(Error::numeric("imitation loss is not finite"));
    }
    Ok(loss)
}

/// d loss / d pred.
fn loss_grad(pred: &[f64], target: &[f64], kind: ImitationLoss, out: &mut Vec<f64>) {
    out.clear();
    match kind {
        ImitationLoss::L1 => out.extend(pred.iter().zip(target).map(|(p, t)| {
            let d: f64 = p - t;
            if d == 0.0 {
                0.0
            } else {
                d.signum()
            }
        })),
        ImitationLoss::Kl => out.extend(
            pred.iter()
                .zip(target)
                .map(|(p, &t)| if t > 0.0 { -t / p } else { 0.0 }),
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerShape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl SchedulerShape {
    /// One input and one output per task.
    pub fn for_tasks(num_tasks: usize, hidden: usize) -> Self {
        SchedulerShape {
            inputs: num_tasks,
            hidden,
            outputs: num_tasks,
            activation: Activation::Relu,
        }
    }

    pub fn num_params(&self) -> usize {
        self.hidden * (self.inputs + 1) + self.outputs * (self.hidden + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerNet {
    shape: SchedulerShape,
    params: ParamVector,
}

/// Intermediate values of one forward pass.
struct Trace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl SchedulerNet {
    pub fn zeros(shape: SchedulerShape) -> Result<Self> {
        if shape.inputs == 0 || shape.hidden == 0 || shape.outputs == 0 {
            return Err(Error::arg("scheduler dimensions must all be >= 1"));
        }
        let n = shape.num_params();
        Ok(SchedulerNet {
            shape,
            params: ParamVector::zeros(n),
        })
    }

    /// Parameters uniform in `[−INIT_SCALE, INIT_SCALE]`.
    pub fn new_random<R: Rng + ?Sized>(shape: SchedulerShape, rng: &mut R) -> Result<Self> {
        let mut net = SchedulerNet::zeros(shape)?;
        for p in net.params.iter_mut() {
            *p = rng.random_range(-INIT_SCALE..=INIT_SCALE);
        }
        Ok(net)
    }

    pub fn shape(&self) -> &SchedulerShape {
        &self.shape
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim(format!(
                "scheduler has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if !params.is_finite() {
            return Err(Error::numeric("refusing non-finite scheduler parameters"));
        }
        self.params = params;
        Ok(())
    }

    // Offsets of W1, b1, W2, b2.
    fn offsets(&self) -> [usize; 4] {
        let s = &self.shape;
        let w1 = 0;
        let b1 = w1 + s.hidden * s.inputs;
        let w2 = b1 + s.hidden;
        let b2 = w2 + s.outputs * s.hidden;
        [w1, b1, w2, b2]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.inputs {
            return Err(Error::dim(format!(
                "scheduler expects {} features, got {}",
                self.shape.inputs,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("scheduler features are not finite"));
        }
        Ok(())
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> Trace {
        let s = &self.shape;
        let [w1, b1, w2, b2] = self.offsets();
        let pre: Vec<f64> = (0..s.hidden)
            .map(|h| {
                let row = &params[w1 + h * s.inputs..w1 + (h + 1) * s.inputs];
                params[b1 + h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|&z| s.activation.apply(z)).collect();
        let logits: Vec<f64> = (0..s.outputs)
            .map(|o| {
                let row = &params[w2 + o * s.hidden..w2 + (o + 1) * s.hidden];
                params[b2 + o] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Trace {
            pre,
            hidden,
            probs: softmax_vec(&logits),
        }
    }

    /// Task weights for the given moving-average losses.
    pub fn predict_features(&self, features: &[f64]) -> Result<ImportanceWeights> {
        self.check_input(features)?;
        let probs = self.forward(&self.params, features).probs;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("scheduler output is not finite"));
        }
        ImportanceWeights::new(probs)
    }

    pub fn predict(&self, state: &TrainerState) -> Result<ImportanceWeights> {
        self.predict_features(&state.l_ma)
    }

    /// Hidden pre-activations for `features`; used to keep gradient checks
    /// away from ReLU kinks.
    pub fn hidden_preactivations(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features)?;
        Ok(self.forward(&self.params, features).pre)
    }

    /// Mean imitation loss over `batch` at `params`.
    pub fn imitation_loss_with(&self, params: &[f64], batch: &[&ReplayEntry], kind: ImitationLoss) -> Result<f64> {
        self.check_batch(params, batch)?;
        let mut total = 0.0;
        for e in batch {
            total += scheduler_loss(&self.forward(params, &e.state).probs, &e.action, kind)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean imitation loss over `batch` and its gradient with respect to the
    /// scheduler parameters.
    pub fn imitation_grad(&self, batch: &[&ReplayEntry], kind: ImitationLoss) -> Result<(f64, ParamVector)> {
        self.imitation_grad_with(&self.params, batch, kind)
    }

    pub fn imitation_grad_with(
        &self,
        params: &[f64],
        batch: &[&ReplayEntry],
        kind: ImitationLoss,
    ) -> Result<(f64, ParamVector)> {
        self.check_batch(params, batch)?;
        let s = &self.shape;
        let [w1, b1, w2, b2] = self.offsets();
        let mut grad = ParamVector::zeros(params.len());
        let mut dp = Vec::with_capacity(s.outputs);
        let mut total = 0.0;
        for e in batch {
            let tr = self.forward(params, &e.state);
            total += scheduler_loss(&tr.probs, &e.action, kind)?;
            loss_grad(&tr.probs, &e.action, kind, &mut dp);
            // Through the softmax: dz_j = p_j (dp_j − Σ_i p_i dp_i).
            let inner: f64 = tr.probs.iter().zip(&dp).map(|(p, d)| p * d).sum();
            let dz: Vec<f64> = tr.probs.iter().zip(&dp).map(|(p, d)| p * (d - inner)).collect();
            let mut dh = vec![0.0; s.hidden];
            for o in 0..s.outputs {
                grad[b2 + o] += dz[o];
                let row = w2 + o * s.hidden;
                for h in 0..s.hidden {
                    grad[row + h] += dz[o] * tr.hidden[h];
                    dh[h] += params[row + h] * dz[o];
                }
            }
            for h in 0..s.hidden {
                let da = dh[h] * s.activation.derivative(tr.pre[h], tr.hidden[h]);
                if da == 0.0 {
                    continue;
                }
                grad[b1 + h] += da;
                let row = w1 + h * s.inputs;
                for i in 0..s.inputs {
                    grad[row + i] += da * e.state[i];
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        Ok((total * scale, grad))
    }

    fn check_batch(&self, params: &[f64], batch: &[&ReplayEntry]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim(format!(
                "scheduler has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if batch.is_empty() {
            return Err(Error::Precondition("imitation batch is empty".into()));
        }
        for e in batch {
            self.check_input(&e.state)?;
            if e.action.len() != self.shape.outputs {
                return Err(Error::dim(format!(
                    "action has {} entries, scheduler outputs {}",
                    e.action.len(),
                    self.shape.outputs
                )));
            }
        }
        Ok(())
    }
}

pub fn predict(net: &SchedulerNet, state: &TrainerState) -> Result<ImportanceWeights> {
    net.predict(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub state: Vec<f64>,
    pub action: ImportanceWeights,
}

/// Aggregated `(state, oracle action)` pairs, oldest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayBuffer {
    entries: VecDeque<ReplayEntry>,
    capacity: Option<usize>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Buffer that evicts its oldest entry once `capacity` is exceeded.
    pub fn with_capacity(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::arg("replay capacity must be >= 1"));
        }
        Ok(ReplayBuffer {
            entries: VecDeque::with_capacity(capacity),
            capacity: Some(capacity),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&ReplayEntry> {
        self.entries.get(i)
    }

    /// Appends a copy of `state` with its action.
    pub fn push(&mut self, state: &[f64], action: ImportanceWeights) -> Result<()> {
        if state.len() != action.len() {
            return Err(Error::arg(format!(
                "state has {} features but action has {} entries",
                state.len(),
                action.len()
            )));
        }
        if let Some(first) = self.entries.front() {
            if first.state.len() != state.len() {
                return Err(Error::arg(format!(
                    "buffer holds {}-task entries, got {}",
                    first.state.len(),
                    state.len()
                )));
            }
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("replay state must be finite"));
        }
        self.entries.push_back(ReplayEntry {
            state: state.to_vec(),
            action,
        });
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap {
                self.entries.pop_front();
            }
        }
        Ok(())
    }

    /// Up to `size` distinct entries drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<&ReplayEntry> {
        let n = size.min(self.entries.len());
        index::sample(rng, self.entries.len(), n)
            .into_iter()
            .map(|i| &self.entries[i])
            .collect()
    }
}

/// Validates `action` and appends it; see [`ReplayBuffer::push`].
pub fn push_replay(buffer: &mut ReplayBuffer, state: &[f64], action: &[f64]) -> Result<()> {
    let action = ImportanceWeights::new(action.to_vec())?;
    buffer.push(state, action)
}

/// One optimizer step on the mean imitation loss over a uniform sample of
/// `min(batch_size, |buffer|)` replay entries. Returns the pre-step loss.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut SchedulerNet,
    buffer: &ReplayBuffer,
    batch_size: usize,
    kind: ImitationLoss,
    opt: &mut OptimizerState,
    rng: &mut R,
) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::Precondition(
            "cannot train the scheduler on an empty replay buffer".into(),
        ));
    }
    if batch_size == 0 {
        return Err(Error::Precondition("scheduler batch size must be >= 1".into()));
    }
    let batch = buffer.sample(batch_size, rng);
    let (loss, grad) = net.imitation_grad(&batch, kind)?;
    let mut params = net.params.clone();
    opt.step(&mut params, &grad)?;
    net.set_params(params)?;
    Ok(loss)
}
