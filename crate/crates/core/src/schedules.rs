//! Hand-engineered training schedules and the weight vector they emit.
//!
//! Every schedule returns an [`ImportanceWeights`]: a distribution over the
//! `K + 1` tasks with index 0 the main task. The training loop samples the
//! next task from it.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σw = 1` accepted by [`ImportanceWeights::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex over the main task and `K` auxiliaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ImportanceWeights(Vec<f64>);

impl ImportanceWeights {
    /// Validates that `w` is non-empty, nonnegative, finite and sums to one.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::arg("importance weights must have at least one entry"));
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::arg(format!(
                "importance weight {i} is {v}; entries must be finite and nonnegative"
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::arg(format!("importance weights sum to {sum}, not 1")));
        }
        Ok(ImportanceWeights(w))
    }

    /// For vectors already normalized by construction.
    pub(crate) fn from_normalized(w: Vec<f64>) -> Self {
        debug_assert!(Self::new(w.clone()).is_ok(), "not a simplex point: {w:?}");
        ImportanceWeights(w)
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        ImportanceWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Number of tasks, `K + 1`.
    pub fn num_tasks(&self) -> usize {
        self.0.len()
    }
}

impl Deref for ImportanceWeights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ImportanceWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ImportanceWeights::new(v)
    }
}

impl From<ImportanceWeights> for Vec<f64> {
    fn from(w: ImportanceWeights) -> Vec<f64> {
        w.0
    }
}

/// Fraction of an epoch over the main task's training set processed so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleClock {
    t_frac: f64,
}

impl ScheduleClock {
    pub fn new(t_frac: f64) -> Result<Self> {
        if !(t_frac.is_finite() && t_frac >= 0.0) {
            return Err(Error::arg(format!("clock must be finite and >= 0, got {t_frac}")));
        }
        Ok(ScheduleClock { t_frac })
    }

    /// Clock after `examples` training rows given a main corpus of `main_size` rows.
    pub fn from_examples(examples: u64, main_size: usize) -> Self {
        ScheduleClock {
            t_frac: examples as f64 / main_size.max(1) as f64,
        }
    }

    pub fn t_frac(&self) -> f64 {
        self.t_frac
    }

    /// Advances by `examples` rows; never moves backwards.
    pub fn advance(&mut self, examples: usize, main_size: usize) {
        self.t_frac += examples as f64 / main_size.max(1) as f64;
    }
}

/// Which policy supplies the per-step weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Uniform,
    Constant,
    Exponential,
    Mixture,
    Learned,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::Uniform,
        ScheduleKind::Constant,
        ScheduleKind::Exponential,
        ScheduleKind::Mixture,
        ScheduleKind::Learned,
    ];

    /// Whether the scheduler network and oracle take part in the run.
    pub fn uses_scheduler(self) -> bool {
        matches!(self, ScheduleKind::Mixture | ScheduleKind::Learned)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Uniform => "uniform",
            ScheduleKind::Constant => "constant",
            ScheduleKind::Exponential => "exponential",
            ScheduleKind::Mixture => "mixture",
            ScheduleKind::Learned => "learned",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown schedule `{s}`")))
    }
}

/// Hand-engineered schedule that sets the main task's share in a mixture run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MainShare {
    Constant,
    Exponential,
}

pub fn uniform_weights(k: usize) -> ImportanceWeights {
    let n = k + 1;
    ImportanceWeights::from_normalized(vec![1.0 / n as f64; n])
}

/// Main task gets `alpha`, the auxiliaries split the rest evenly.
pub fn constant_biased_weights(k: usize, alpha: f64) -> Result<ImportanceWeights> {
    if k == 0 {
        return Err(Error::arg("constant schedule needs at least one auxiliary task"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::arg(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(main_plus_uniform_aux(k, alpha))
}

/// Main task share `1 − exp(−alpha·t)`; auxiliaries split the rest evenly.
pub fn exponential_weights(k: usize, alpha: f64, clock: ScheduleClock) -> Result<ImportanceWeights> {
    if k == 0 {
        return Err(Error::arg("exponential schedule needs at least one auxiliary task"));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
    }
    let p_main = 0.0 - (-alpha * clock.t_frac()).exp_m1();
    Ok(main_plus_uniform_aux(k, p_main))
}

/// Main task share from a heuristic, auxiliaries in proportion to `aux_dist`.
/// An all-zero `aux_dist` falls back to an even split.
pub fn mixture_weights(p_main: f64, aux_dist: &[f64]) -> Result<ImportanceWeights> {
    if !(0.0..=1.0).contains(&p_main) {
        return Err(Error::arg(format!("p_main must lie in [0, 1], got {p_main}")));
    }
    if aux_dist.is_empty() {
        return Err(Error::arg("mixture needs at least one auxiliary task"));
    }
    if aux_dist.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::arg("auxiliary distribution entries must be finite and >= 0"));
    }
    let total: f64 = aux_dist.iter().sum();
    if total == 0.0 {
        return Ok(main_plus_uniform_aux(aux_dist.len(), p_main));
    }
    let rest = 1.0 - p_main;
    let mut w = Vec::with_capacity(aux_dist.len() + 1);
    w.push(p_main);
    w.extend(aux_dist.iter().map(|a| rest * a / total));
    Ok(ImportanceWeights::from_normalized(w))
}

fn main_plus_uniform_aux(k: usize, p_main: f64) -> ImportanceWeights {
    let each = (1.0 - p_main) / k as f64;
    let mut w = vec![each; k + 1];
    w[0] = p_main;
    ImportanceWeights::from_normalized(w)
}
