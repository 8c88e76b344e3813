//! One-step look-ahead oracle for task importance weights.
//!
//! The oracle asks which mix of task gradients, applied as one virtual SGD
//! step from the current parameters, lowers the validation loss fastest.
//! Differentiating the validation loss after that step with respect to the
//! weights at zero gives, per task, `η · ⟨∇L_val, ∇L_k⟩`; dropping the common
//! factor `η`, clipping negatives and normalizing yields the weights.
//!
//! [`brute_force_oracle`] computes the same derivative by central differences
//! through the virtual step and serves as the independent check.

use crate::error::{Error, Result};
use crate::model::{Minibatch, MtlModel};
use crate::numcore::{dot, ParamVector};
use crate::schedules::ImportanceWeights;

/// Inputs of one oracle query.
#[derive(Clone, Debug)]
pub struct OracleQuery {
    /// Frozen model parameters at the current step.
    pub params: ParamVector,
    /// One minibatch per task, in task order.
    pub task_batches: Vec<Minibatch>,
    /// Minibatch from the validation set, scored with the main task's head.
    pub val_batch: Minibatch,
    /// Virtual step size of the look-ahead update.
    pub step_size: f64,
}

/// Loss gradient of every task's minibatch at the model's current parameters.
pub fn task_gradients(model: &MtlModel, minibatches: &[Minibatch]) -> Result<Vec<ParamVector>> {
    task_gradients_at(model, model.params(), minibatches)
}

pub fn task_gradients_at(model: &MtlModel, params: &[f64], minibatches: &[Minibatch]) -> Result<Vec<ParamVector>> {
    minibatches
        .iter()
        .map(|mb| model.grad_with(params, mb).map(|(_, g)| g))
        .collect()
}

/// `⟨grad_val, grads[k]⟩` for every task.
pub fn alignment_scores(grad_val: &ParamVector, grads: &[ParamVector]) -> Result<Vec<f64>> {
    if !grad_val.is_finite() {
        return Err(Error::numeric("validation gradient is not finite"));
    }
    grads
        .iter()
        .enumerate()
        .map(|(k, g)| {
            if !g.is_finite() {
                return Err(Error::numeric(format!("gradient of task {k} is not finite")));
            }
            dot(grad_val, g)
        })
        .collect()
}

/// Clip at zero and normalize; when nothing is positive, all weight goes to
/// `main_index`.
pub fn project_scores(scores: &[f64], main_index: usize) -> Result<ImportanceWeights> {
    if main_index >= scores.len() {
        return Err(Error::arg(format!(
            "main index {main_index} out of range for {} tasks",
            scores.len()
        )));
    }
    if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::numeric(format!("alignment score of task {k} is not finite")));
    }
    let clipped: Vec<f64> = scores.iter().map(|&s| s.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        Ok(ImportanceWeights::from_normalized(
            clipped.into_iter().map(|c| c / total).collect(),
        ))
    } else {
        Ok(ImportanceWeights::one_hot(scores.len(), main_index))
    }
}

/// Oracle weights from precomputed gradients.
pub fn oracle_weights(grad_val: &ParamVector, grads: &[ParamVector], main_index: usize) -> Result<ImportanceWeights> {
    if grads.is_empty() {
        return Err(Error::arg("oracle needs at least one task gradient"));
    }
    project_scores(&alignment_scores(grad_val, grads)?, main_index)
}

/// Result of a full oracle query through the model.
#[derive(Clone, Debug)]
pub struct OracleAnswer {
    pub weights: ImportanceWeights,
    pub scores: Vec<f64>,
}

/// Gradients for every task and the validation batch at `q.params`, then
/// [`oracle_weights`]. `q.step_size` is not needed here.
pub fn query_oracle(model: &MtlModel, q: &OracleQuery) -> Result<OracleAnswer> {
    check_query(model, q)?;
    let grads = task_gradients_at(model, &q.params, &q.task_batches)?;
    let (_, grad_val) = model.grad_with(&q.params, &q.val_batch)?;
    let scores = alignment_scores(&grad_val, &grads)?;
    let weights = project_scores(&scores, q.val_batch.task_id)?;
    Ok(OracleAnswer { weights, scores })
}

fn check_query(model: &MtlModel, q: &OracleQuery) -> Result<()> {
    if q.task_batches.len() != model.num_tasks() {
        return Err(Error::arg(format!(
            "oracle needs one minibatch per task ({}), got {}",
            model.num_tasks(),
            q.task_batches.len()
        )));
    }
    if let Some((i, mb)) = q.task_batches.iter().enumerate().find(|(i, mb)| mb.task_id != *i) {
        return Err(Error::arg(format!(
            "minibatch at position {i} belongs to task {}",
            mb.task_id
        )));
    }
    if q.step_size.is_nan() || q.step_size <= 0.0 {
        return Err(Error::arg(format!("step size must be positive, got {}", q.step_size)));
    }
    Ok(())
}

/// Oracle weights by direct differentiation of the look-ahead validation loss.
///
/// For each task `k`, the validation loss after the virtual step
/// `θ − η·Σ_j w_j·g_j` is evaluated at `w = ±eps·e_k`; the negated central
/// difference is the descent score for `k`. Scores are then clipped and
/// normalized exactly like [`oracle_weights`].
pub fn brute_force_oracle(model: &MtlModel, q: &OracleQuery, eps: f64) -> Result<ImportanceWeights> {
    check_query(model, q)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::arg(format!("eps must be positive, got {eps}")));
    }
    let grads = task_gradients_at(model, &q.params, &q.task_batches)?;
    let look_ahead = |k: usize, w: f64| -> Result<f64> {
        let mut theta = q.params.clone();
        theta.axpy(-q.step_size * w, &grads[k])?;
        let loss = model.loss_with(&theta, &q.val_batch)?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite look-ahead loss for task {k}")));
        }
        Ok(loss)
    };
    let mut scores = Vec::with_capacity(grads.len());
    for k in 0..grads.len() {
        let derivative = (look_ahead(k, eps)? - look_ahead(k, -eps)?) / (2.0 * eps);
        scores.push(-derivative);
    }
    project_scores(&scores, q.val_batch.task_id)
}
