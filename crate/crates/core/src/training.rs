//! The joint training loop for the multi-task model and its scheduler.
//!
//! Each step samples a minibatch from every task and one from the validation
//! set, picks task weights (heuristic schedule, scheduler network, or oracle),
//! samples one task from those weights, takes one optimizer step on that
//! task's minibatch, and updates that task's moving-average loss. When the
//! oracle is consulted its answer is also pushed to the replay buffer and the
//! scheduler takes one imitation step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, Minibatch, ModelShape, MtlModel, OptimizerKind, OptimizerState};
use crate::numcore::ParamVector;
use crate::oracle::{query_oracle, OracleQuery};
use crate::scheduler::{
    train_step, ImitationLoss, ReplayBuffer, SchedulerNet, SchedulerShape, TrainerState, DEFAULT_HIDDEN,
};
use crate::schedules::{
    constant_biased_weights, exponential_weights, mixture_weights, uniform_weights, ImportanceWeights, MainShare,
    ScheduleClock, ScheduleKind,
};
use crate::seeding::{stream_rng, Stream};
use crate::tasks::{sample_minibatch, validate_tasks, Dataset, Task, ValidationSet};

fn default_beta() -> f64 {
    0.9
}
fn default_gamma() -> f64 {
    0.7
}
fn default_steps() -> usize {
    2000
}
fn default_batch() -> usize {
    16
}
fn default_reward_every() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.5
}
fn default_main_share() -> MainShare {
    MainShare::Constant
}

/// Loop-level knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    /// Probability of using (rather than training) the scheduler on a step.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Moving-average decay for the per-task loss features.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Minibatch size for every task.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Validation minibatch size for oracle queries; defaults to `batch_size`.
    #[serde(default)]
    pub val_batch_size: Option<usize>,
    /// Full-validation reward every this many steps.
    #[serde(default = "default_reward_every")]
    pub reward_every: usize,
    /// Stop after this many reward evaluations without a new best
    /// validation loss.
    #[serde(default)]
    pub patience: Option<usize>,
    /// Slope / constant for the hand-engineered schedules.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Heuristic that fixes the main task's share in mixture runs.
    #[serde(default = "default_main_share")]
    pub mixture_main_share: MainShare,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            beta: default_beta(),
            gamma: default_gamma(),
            steps: default_steps(),
            batch_size: default_batch(),
            val_batch_size: None,
            reward_every: default_reward_every(),
            patience: None,
            alpha: default_alpha(),
            mixture_main_share: default_main_share(),
        }
    }
}

fn default_model_hidden() -> Vec<usize> {
    vec![16]
}
fn default_adam() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_model_lr() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default = "default_model_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_adam")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_model_lr")]
    pub learning_rate: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            hidden: default_model_hidden(),
            optimizer: default_adam(),
            learning_rate: default_model_lr(),
        }
    }
}

fn default_sched_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_sched_lr() -> f64 {
    1e-4
}
fn default_sched_loss() -> ImitationLoss {
    ImitationLoss::L1
}
fn default_sched_batch() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSettings {
    #[serde(default = "default_sched_hidden")]
    pub hidden: usize,
    #[serde(default = "default_adam")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_sched_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_sched_loss")]
    pub loss: ImitationLoss,
    /// Replay minibatch size per imitation step.
    #[serde(default = "default_sched_batch")]
    pub batch_size: usize,
    /// Oldest entries are evicted beyond this size; unbounded when unset.
    #[serde(default)]
    pub replay_capacity: Option<usize>,
}

impl Default for SchedulerSettings {
    fn default() -> Self {
        SchedulerSettings {
            hidden: default_sched_hidden(),
            optimizer: default_adam(),
            learning_rate: default_sched_lr(),
            loss: default_sched_loss(),
            batch_size: default_sched_batch(),
            replay_capacity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub schedule: ScheduleKind,
    pub seed: u64,
    pub training: TrainingSettings,
    pub model: ModelSettings,
    pub scheduler: SchedulerSettings,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            schedule: ScheduleKind::Learned,
            seed: 0,
            training: TrainingSettings::default(),
            model: ModelSettings::default(),
            scheduler: SchedulerSettings::default(),
        }
    }
}

fn in_unit(key: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(key, format!("{v} is not in [0, 1]")));
    }
    Ok(())
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(key, format!("{v} must be finite and > 0")));
    }
    Ok(())
}

fn at_least_one(key: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(key, "must be >= 1"));
    }
    Ok(())
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        in_unit("training.beta", t.beta)?;
        in_unit("training.gamma", t.gamma)?;
        at_least_one("training.steps", t.steps)?;
        at_least_one("training.batch_size", t.batch_size)?;
        if let Some(v) = t.val_batch_size {
            at_least_one("training.val_batch_size", v)?;
        }
        at_least_one("training.reward_every", t.reward_every)?;
        if let Some(p) = t.patience {
            at_least_one("training.patience", p)?;
        }
        match self.schedule {
            ScheduleKind::Constant => in_unit("training.alpha", t.alpha)?,
            ScheduleKind::Exponential => positive("training.alpha", t.alpha)?,
            ScheduleKind::Mixture => match t.mixture_main_share {
                MainShare::Constant => in_unit("training.alpha", t.alpha)?,
                MainShare::Exponential => positive("training.alpha", t.alpha)?,
            },
            _ => {}
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::config("model.hidden", "layer widths must be >= 1"));
        }
        positive("model.learning_rate", self.model.learning_rate)?;
        at_least_one("scheduler.hidden", self.scheduler.hidden)?;
        positive("scheduler.learning_rate", self.scheduler.learning_rate)?;
        at_least_one("scheduler.batch_size", self.scheduler.batch_size)?;
        if let Some(c) = self.scheduler.replay_capacity {
            at_least_one("scheduler.replay_capacity", c)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    Scheduler,
    Oracle,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub weights: ImportanceWeights,
    pub source: PolicySource,
    pub task: usize,
    /// Loss of the chosen minibatch before the update.
    pub task_loss: f64,
    /// Validation-loss decrease since the previous reward evaluation; set on
    /// evaluation steps only.
    pub reward: Option<f64>,
    /// Moving averages after this step's update.
    pub l_ma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
    pub selection_counts: Vec<u64>,
    pub oracle_queries: u64,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().filter_map(|r| r.reward).sum()
    }

    /// Mean of the weight vectors produced by the oracle, if it was queried.
    pub fn mean_oracle_weights(&self) -> Option<Vec<f64>> {
        let oracle: Vec<&StepRecord> = self
            .records
            .iter()
            .filter(|r| r.source == PolicySource::Oracle)
            .collect();
        let first = oracle.first()?;
        let mut mean = vec![0.0; first.weights.len()];
        for r in &oracle {
            for (m, w) in mean.iter_mut().zip(r.weights.iter()) {
                *m += w;
            }
        }
        let n = oracle.len() as f64;
        Some(mean.into_iter().map(|m| m / n).collect())
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: MtlModel,
    pub scheduler: SchedulerNet,
    pub replay: ReplayBuffer,
    pub log: TrainingLog,
}

/// `l_ma[k] ← (1 − γ)·l_ma[k] + γ·loss`; other entries untouched.
pub fn update_moving_average(state: &mut TrainerState, k: usize, loss: f64, gamma: f64) -> Result<()> {
    if k >= state.l_ma.len() {
        return Err(Error::arg(format!(
            "task {k} out of range for {} tasks",
            state.l_ma.len()
        )));
    }
    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite loss {loss} for task {k}")));
    }
    state.l_ma[k] = (1.0 - gamma) * state.l_ma[k] + gamma * loss;
    Ok(())
}

/// Categorical draw; zero-weight tasks are never returned.
pub fn sample_task<R: Rng + ?Sized>(w: &ImportanceWeights, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in w.iter().enumerate() {
        if p > 0.0 {
            last = k;
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    // Rounding left Σw slightly below u.
    last
}

/// Validation loss on the full set before minus after the update.
pub fn reward(before: &[f64], after: &[f64], model: &MtlModel, val: &Dataset) -> Result<f64> {
    let mb = val.as_minibatch(0);
    let r = model.loss_with(before, &mb)? - model.loss_with(after, &mb)?;
    if !r.is_finite() {
        return Err(Error::numeric("non-finite reward"));
    }
    Ok(r)
}

/// Architecture implied by the tasks and the model settings.
pub fn model_shape(tasks: &[Task], settings: &ModelSettings) -> ModelShape {
    ModelShape {
        input_dim: tasks[0].train.input_dim(),
        hidden: settings.hidden.clone(),
        heads: tasks.iter().map(Task::kind).collect(),
        activation: Activation::Tanh,
    }
}

/// Runs the full loop for `cfg.training.steps` steps (or until early stop).
pub fn run_training(cfg: &LoopConfig, tasks: &[Task], val: &ValidationSet) -> Result<TrainingOutcome> {
    cfg.validate()?;
    validate_tasks(tasks)?;
    let tcfg = &cfg.training;
    let val_data = val.data();
    if val_data.input_dim() != tasks[0].train.input_dim() || val_data.kind() != tasks[0].kind() {
        return Err(Error::arg("validation set does not match the main task"));
    }
    let val_batch_size = tcfg.val_batch_size.unwrap_or(tcfg.batch_size);
    for t in tasks {
        if tcfg.batch_size > t.train.len() {
            return Err(Error::arg(format!(
                "batch size {} exceeds task {}'s {} training rows",
                tcfg.batch_size,
                t.id,
                t.train.len()
            )));
        }
    }
    if val_batch_size > val_data.len() {
        return Err(Error::arg(format!(
            "validation batch size {val_batch_size} exceeds the {} validation rows",
            val_data.len()
        )));
    }
    let num_tasks = tasks.len();
    let num_aux = num_tasks - 1;
    if num_aux == 0
        && matches!(
            cfg.schedule,
            ScheduleKind::Constant | ScheduleKind::Exponential | ScheduleKind::Mixture
        )
    {
        return Err(Error::config(
            "schedule",
            format!("`{}` needs at least one auxiliary task", cfg.schedule),
        ));
    }

    let mut model = MtlModel::new_random(
        model_shape(tasks, &cfg.model),
        &mut stream_rng(cfg.seed, Stream::ModelInit),
    )?;
    let mut scheduler = SchedulerNet::new_random(
        SchedulerShape::for_tasks(num_tasks, cfg.scheduler.hidden),
        &mut stream_rng(cfg.seed, Stream::SchedulerInit),
    )?;
    let mut model_opt = OptimizerState::with_kind(cfg.model.optimizer, cfg.model.learning_rate);
    let mut sched_opt = OptimizerState::with_kind(cfg.scheduler.optimizer, cfg.scheduler.learning_rate);
    let mut replay = match cfg.scheduler.replay_capacity {
        Some(c) => ReplayBuffer::with_capacity(c)?,
        None => ReplayBuffer::new(),
    };

    let mut mb_rng = stream_rng(cfg.seed, Stream::Minibatches);
    let mut task_rng = stream_rng(cfg.seed, Stream::TaskSampling);
    let mut coin_rng = stream_rng(cfg.seed, Stream::Coin);
    let mut replay_rng = stream_rng(cfg.seed, Stream::Replay);

    let val_full = val_data.as_minibatch(0);
    let initial_val_loss = model.forward_loss(&val_full).map_err(|e| e.at_step(0))?;
    let mut last_eval = initial_val_loss;
    let mut best = initial_val_loss;
    let mut evals_since_best = 0;
    let mut stopped_early = false;

    let mut state = TrainerState::new(num_tasks);
    let mut clock = ScheduleClock::default();
    let main_size = tasks[0].train.len();
    let mut records = Vec::with_capacity(tcfg.steps);
    let mut selection_counts = vec![0u64; num_tasks];
    let mut oracle_queries = 0u64;

    for t in 0..tcfg.steps {
        let batches: Vec<Minibatch> = tasks
            .iter()
            .map(|task| sample_minibatch(&task.train, tcfg.batch_size, task.id, &mut mb_rng))
            .collect::<Result<_>>()
            .map_err(|e| e.at_step(t))?;
        let val_batch = sample_minibatch(val_data, val_batch_size, 0, &mut mb_rng).map_err(|e| e.at_step(t))?;

        let main_share = || -> Result<f64> {
            Ok(match tcfg.mixture_main_share {
                MainShare::Constant => tcfg.alpha,
                MainShare::Exponential => exponential_weights(num_aux, tcfg.alpha, clock)?[0],
            })
        };

        let (weights, source) = match cfg.schedule {
            ScheduleKind::Uniform => (uniform_weights(num_aux), PolicySource::Heuristic),
            ScheduleKind::Constant => (
                constant_biased_weights(num_aux, tcfg.alpha).map_err(|e| e.at_step(t))?,
                PolicySource::Heuristic,
            ),
            ScheduleKind::Exponential => (
                exponential_weights(num_aux, tcfg.alpha, clock).map_err(|e| e.at_step(t))?,
                PolicySource::Heuristic,
            ),
            ScheduleKind::Learned | ScheduleKind::Mixture => {
                let use_scheduler = coin_rng.random::<f64>() < tcfg.beta;
                let (raw, source) = if use_scheduler {
                    (
                        scheduler.predict(&state).map_err(|e| e.at_step(t))?,
                        PolicySource::Scheduler,
                    )
                } else {
                    let q = OracleQuery {
                        params: model.params().clone(),
                        task_batches: batches.clone(),
                        val_batch: val_batch.clone(),
                        step_size: model_opt.learning_rate,
                    };
                    let answer = query_oracle(&model, &q).map_err(|e| e.at_step(t))?;
                    oracle_queries += 1;
                    replay
                        .push(&state.l_ma, answer.weights.clone())
                        .map_err(|e| e.at_step(t))?;
                    train_step(
                        &mut scheduler,
                        &replay,
                        cfg.scheduler.batch_size,
                        cfg.scheduler.loss,
                        &mut sched_opt,
                        &mut replay_rng,
                    )
                    .map_err(|e| e.at_step(t))?;
                    (answer.weights, PolicySource::Oracle)
                };
                if cfg.schedule == ScheduleKind::Mixture {
                    let p_main = main_share().map_err(|e| e.at_step(t))?;
                    (mixture_weights(p_main, &raw[1..]).map_err(|e| e.at_step(t))?, source)
                } else {
                    (raw, source)
                }
            }
        };

        let k = sample_task(&weights, &mut task_rng);
        let mb = &batches[k];
        let (task_loss, grad) = model.backward_grad(mb).map_err(|e| e.at_step(t))?;
        let mut params: ParamVector = model.params().clone();
        model_opt.step(&mut params, &grad).map_err(|e| e.at_step(t))?;
        model.set_params(params).map_err(|e| e.at_step(t))?;
        update_moving_average(&mut state, k, task_loss, tcfg.gamma).map_err(|e| e.at_step(t))?;
        state.t += 1;
        clock.advance(mb.len(), main_size);
        selection_counts[k] += 1;

        let last_step = t + 1 == tcfg.steps;
        let mut reward_value = None;
        if (t + 1) % tcfg.reward_every == 0 || last_step {
            let val_loss = model.forward_loss(&val_full).map_err(|e| e.at_step(t))?;
            reward_value = Some(last_eval - val_loss);
            last_eval = val_loss;
            if val_loss < best {
                best = val_loss;
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
            }
        }

        records.push(StepRecord {
            t,
            weights,
            source,
            task: k,
            task_loss,
            reward: reward_value,
            l_ma: state.l_ma.clone(),
        });

        if let Some(p) = tcfg.patience {
            if evals_since_best >= p && !last_step {
                // Close the reward interval so the rewards still telescope.
                if reward_value.is_none() {
                    let val_loss = model.forward_loss(&val_full).map_err(|e| e.at_step(t))?;
                    records.last_mut().expect("just pushed").reward = Some(last_eval - val_loss);
                    last_eval = val_loss;
                }
                stopped_early = true;
                break;
            }
        }
    }

    let log = TrainingLog {
        records,
        initial_val_loss,
        final_val_loss: last_eval,
        selection_counts,
        oracle_queries,
        stopped_early,
    };
    Ok(TrainingOutcome {
        model,
        scheduler,
        replay,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_synthetic_suite, AuxSpec, SuiteConfig, SyntheticKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moving_average_examples() {
        let mut s = TrainerState::new(3);
        update_moving_average(&mut s, 1, 1.0, 0.7).unwrap();
        assert_eq!(s.l_ma, vec![0.0, 0.7, 0.0]);
        update_moving_average(&mut s, 1, 1.0, 0.7).unwrap();
        assert_eq!(s.l_ma[1], (1.0 - 0.7) * 0.7 + 0.7 * 1.0);
        assert!((s.l_ma[1] - 0.91).abs() < 1e-15);
        let mut z = TrainerState::new(2);
        for _ in 0..5 {
            update_moving_average(&mut z, 0, 3.0, 0.0).unwrap();
        }
        assert_eq!(z.l_ma, vec![0.0, 0.0]);
        assert!(update_moving_average(&mut z, 2, 1.0, 0.5).is_err());
        assert!(update_moving_average(&mut z, 0, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn sample_task_one_hot_and_zero_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = ImportanceWeights::one_hot(4, 2);
        for _ in 0..1000 {
            assert_eq!(sample_task(&w, &mut rng), 2);
        }
        let w = ImportanceWeights::new(vec![0.0, 0.3, 0.0, 0.7]).unwrap();
        for _ in 0..5000 {
            let k = sample_task(&w, &mut rng);
            assert!(k == 1 || k == 3);
        }
    }

    #[test]
    fn sample_task_frequencies() {
        // Binomial(10000, 0.5): sd 50.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = ImportanceWeights::new(vec![0.5, 0.5]).unwrap();
        let hits = (0..10_000).filter(|_| sample_task(&w, &mut rng) == 0).count();
        assert!((hits as f64 - 5000.0).abs() <= 5.0 * 50.0, "{hits}");
    }

    fn small_suite() -> (Vec<Task>, ValidationSet) {
        let cfg = SuiteConfig {
            input_dim: 4,
            main_kind: SyntheticKind::Regression,
            main_train_size: 30,
            val_size: 40,
            auxiliaries: vec![
                AuxSpec {
                    relatedness: 0.9,
                    train_size: 30,
                    kind: SyntheticKind::Regression,
                },
                AuxSpec {
                    relatedness: 0.0,
                    train_size: 30,
                    kind: SyntheticKind::Classification,
                },
            ],
            noise_std: 0.1,
            label_flip: 0.05,
        };
        make_synthetic_suite(&cfg, 5).unwrap().into_parts()
    }

    fn small_cfg(schedule: ScheduleKind, steps: usize) -> LoopConfig {
        LoopConfig {
            schedule,
            seed: 3,
            training: TrainingSettings {
                steps,
                batch_size: 8,
                ..TrainingSettings::default()
            },
            model: ModelSettings {
                hidden: vec![5],
                ..ModelSettings::default()
            },
            scheduler: SchedulerSettings {
                hidden: 12,
                ..SchedulerSettings::default()
            },
        }
    }

    #[test]
    fn reward_of_no_change_is_zero() {
        let (tasks, val) = small_suite();
        let model = MtlModel::new_random(
            model_shape(&tasks, &ModelSettings::default()),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let p = model.params().clone();
        assert_eq!(reward(&p, &p, &model, val.data()).unwrap(), 0.0);
    }

    #[test]
    fn every_schedule_runs() {
        let (tasks, val) = small_suite();
        for kind in ScheduleKind::ALL {
            let out = run_training(&small_cfg(kind, 40), &tasks, &val).unwrap();
            assert_eq!(out.log.steps(), 40);
            assert_eq!(out.log.selection_counts.iter().sum::<u64>(), 40);
            assert_eq!(out.log.oracle_queries as usize, out.replay.len());
            if !kind.uses_scheduler() {
                assert_eq!(out.log.oracle_queries, 0);
                assert!(out.log.records.iter().all(|r| r.source == PolicySource::Heuristic));
            }
        }
    }

    #[test]
    fn mixture_keeps_heuristic_main_share() {
        let (tasks, val) = small_suite();
        let mut cfg = small_cfg(ScheduleKind::Mixture, 30);
        cfg.training.beta = 0.5;
        let out = run_training(&cfg, &tasks, &val).unwrap();
        for r in &out.log.records {
            assert!((r.weights[0] - 0.5).abs() < 1e-12);
        }
        assert!(out.log.oracle_queries > 0);
    }

    #[test]
    fn telescoping_with_cadence() {
        let (tasks, val) = small_suite();
        for every in [1, 7] {
            let mut cfg = small_cfg(ScheduleKind::Learned, 50);
            cfg.training.reward_every = every;
            let log = run_training(&cfg, &tasks, &val).unwrap().log;
            let diff = log.total_reward() - (log.initial_val_loss - log.final_val_loss);
            assert!(diff.abs() < 1e-10, "{diff}");
            assert!(log.records.last().unwrap().reward.is_some());
        }
    }

    #[test]
    fn patience_stops_early() {
        let (tasks, val) = small_suite();
        let mut cfg = small_cfg(ScheduleKind::Uniform, 400);
        cfg.training.patience = Some(1);
        cfg.training.reward_every = 1;
        cfg.model.learning_rate = 0.5;
        let log = run_training(&cfg, &tasks, &val).unwrap().log;
        assert!(log.stopped_early);
        assert!(log.steps() < 400);
        let diff = log.total_reward() - (log.initial_val_loss - log.final_val_loss);
        assert!(diff.abs() < 1e-10);
    }

    #[test]
    fn config_validation_names_keys() {
        let mut cfg = small_cfg(ScheduleKind::Learned, 10);
        cfg.training.beta = 1.5;
        let err = cfg.validate().unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, .. } if key == "training.beta"),
            "{err}"
        );
        let mut cfg = small_cfg(ScheduleKind::Exponential, 10);
        cfg.training.alpha = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let (tasks, val) = small_suite();
        let mut cfg = small_cfg(ScheduleKind::Uniform, 5);
        cfg.training.batch_size = 31;
        assert!(matches!(run_training(&cfg, &tasks, &val), Err(Error::Argument(_))));
    }
}
