//! Multi-task training with a learned task scheduler.
//!
//! A shared-trunk network is trained on a main task plus auxiliary tasks. At
//! every step a small scheduler network picks how much weight each task gets;
//! it is trained online to imitate a one-step look-ahead oracle.

pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod model;
pub mod numcore;
pub mod oracle;
pub mod scheduler;
pub mod schedules;
pub mod seeding;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use model::{Minibatch, ModelShape, MtlModel, OptimizerState, TaskKind};
pub use numcore::{Matrix, ParamVector};
pub use oracle::{brute_force_oracle, oracle_weights, query_oracle, OracleQuery};
pub use scheduler::{ReplayBuffer, SchedulerNet, TrainerState};
pub use schedules::{ImportanceWeights, ScheduleKind};
pub use tasks::{make_synthetic_suite, Dataset, SuiteConfig, Task, ValidationSet};
pub use training::{run_training, LoopConfig, TrainingLog, TrainingOutcome};
