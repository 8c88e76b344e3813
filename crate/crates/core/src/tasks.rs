//! Tasks, datasets, minibatch sampling, synthetic suites and CSV ingestion.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Minibatch, TaskKind};
use crate::numcore::{dot, Matrix};
use crate::seeding::{sub_stream_rng, Stream};

/// Rows of `(input, target)` pairs for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
    kind: TaskKind,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix, kind: TaskKind) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::arg("dataset must contain at least one row"));
        }
        if inputs.rows() != targets.rows() {
            return Err(Error::dim(format!(
                "dataset has {} input rows but {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        if !inputs.is_finite() {
            return Err(Error::numeric("dataset inputs contain non-finite values"));
        }
        kind.validate_targets(&targets)?;
        Ok(Dataset { inputs, targets, kind })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    /// The whole dataset as one minibatch for `task_id`'s head.
    pub fn as_minibatch(&self, task_id: usize) -> Minibatch {
        Minibatch {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            task_id,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskRole {
    Main,
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: usize,
    pub role: TaskRole,
    pub train: Dataset,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        self.train.kind()
    }
}

/// Held-out rows from the main task's distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationSet(Dataset);

impl ValidationSet {
    /// Rejects a validation set that shares any row with the main training set.
    pub fn new(data: Dataset, main_train: &Dataset) -> Result<Self> {
        if data.kind() != main_train.kind() || data.input_dim() != main_train.input_dim() {
            return Err(Error::arg(
                "validation set must have the main task's input dimension and kind",
            ));
        }
        let train_rows: HashSet<Vec<u64>> = (0..main_train.len())
            .map(|i| row_key(main_train.inputs().row(i), main_train.targets().row(i)))
            .collect();
        for i in 0..data.len() {
            if train_rows.contains(&row_key(data.inputs().row(i), data.targets().row(i))) {
                return Err(Error::arg(format!(
                    "validation row {i} also appears in the main training set"
                )));
            }
        }
        Ok(ValidationSet(data))
    }

    pub fn data(&self) -> &Dataset {
        &self.0
    }
}

fn row_key(x: &[f64], y: &[f64]) -> Vec<u64> {
    x.iter().chain(y).map(|v| v.to_bits()).collect()
}

/// Checks the task list invariants: ids are `0..len`, task 0 is the only main
/// task, and every task shares the input dimension.
pub fn validate_tasks(tasks: &[Task]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::arg("at least the main task is required"));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.id != i {
            return Err(Error::arg(format!(
                "task ids must be contiguous from 0; position {i} has id {}",
                t.id
            )));
        }
        let expect = if i == 0 { TaskRole::Main } else { TaskRole::Auxiliary };
        if t.role != expect {
            return Err(Error::arg(format!("task {i} must have role {expect:?}")));
        }
        if t.train.input_dim() != tasks[0].train.input_dim() {
            return Err(Error::dim(format!(
                "task {i} has {} features, main task has {}",
                t.train.input_dim(),
                tasks[0].train.input_dim()
            )));
        }
    }
    Ok(())
}

/// Uniform sample of `size` distinct rows, in draw order.
pub fn sample_minibatch<R: Rng + ?Sized>(d: &Dataset, size: usize, task_id: usize, rng: &mut R) -> Result<Minibatch> {
    if size == 0 || size > d.len() {
        return Err(Error::arg(format!("minibatch size {size} outside [1, {}]", d.len())));
    }
    let idx = index::sample(rng, d.len(), size).into_vec();
    Ok(Minibatch {
        inputs: d.inputs.select_rows(&idx),
        targets: d.targets.select_rows(&idx),
        task_id,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Regression,
    /// Binary labels from the sign of the linear score.
    Classification,
}

impl SyntheticKind {
    pub fn task_kind(self) -> TaskKind {
        match self {
            SyntheticKind::Regression => TaskKind::Regression { outputs: 1 },
            SyntheticKind::Classification => TaskKind::Classification { classes: 2 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxSpec {
    /// Mixing weight between the main task's ground truth (1) and an
    /// independent direction (0).
    pub relatedness: f64,
    pub train_size: usize,
    #[serde(default = "default_kind")]
    pub kind: SyntheticKind,
}

fn default_kind() -> SyntheticKind {
    SyntheticKind::Regression
}

fn default_noise_std() -> f64 {
    0.1
}

fn default_label_flip() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub input_dim: usize,
    #[serde(default = "default_kind")]
    pub main_kind: SyntheticKind,
    pub main_train_size: usize,
    pub val_size: usize,
    #[serde(default)]
    pub auxiliaries: Vec<AuxSpec>,
    /// Gaussian target noise for regression tasks.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    /// Label-flip probability for classification tasks.
    #[serde(default = "default_label_flip")]
    pub label_flip: f64,
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("suite.input_dim", "must be >= 1"));
        }
        if self.main_train_size == 0 {
            return Err(Error::config("suite.main_train_size", "must be >= 1"));
        }
        if self.val_size == 0 {
            return Err(Error::config("suite.val_size", "must be >= 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("suite.noise_std", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.label_flip) {
            return Err(Error::config("suite.label_flip", "must lie in [0, 1]"));
        }
        for (i, a) in self.auxiliaries.iter().enumerate() {
            if !(0.0..=1.0).contains(&a.relatedness) {
                return Err(Error::config(
                    format!("suite.auxiliaries[{i}].relatedness"),
                    format!("{} not in [0, 1]", a.relatedness),
                ));
            }
            if a.train_size == 0 {
                return Err(Error::config(
                    format!("suite.auxiliaries[{i}].train_size"),
                    "must be >= 1",
                ));
            }
        }
        Ok(())
    }
}

/// Noisy linear teacher for one synthetic task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskGenerator {
    pub truth: Vec<f64>,
    pub kind: SyntheticKind,
    pub noise_std: f64,
    pub label_flip: f64,
}

impl TaskGenerator {
    /// Standard-normal inputs.
    pub fn sample_inputs<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Matrix {
        let d = self.truth.len();
        let data = (0..rows * d).map(|_| StandardNormal.sample(rng)).collect();
        Matrix::new(rows, d, data).expect("shape is consistent by construction")
    }

    /// Targets for `inputs`; all randomness comes from `noise`.
    pub fn label<R: Rng + ?Sized>(&self, inputs: &Matrix, noise: &mut R) -> Matrix {
        let data = (0..inputs.rows())
            .map(|i| {
                let score = dot(&self.truth, inputs.row(i)).expect("input dim matches truth");
                match self.kind {
                    SyntheticKind::Regression => {
                        let e: f64 = StandardNormal.sample(noise);
                        score + self.noise_std * e
                    }
                    SyntheticKind::Classification => {
                        let label = score > 0.0;
                        let flip = noise.random::<f64>() < self.label_flip;
                        if label ^ flip {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        Matrix::new(inputs.rows(), 1, data).expect("one target column")
    }

    pub fn dataset<R: Rng + ?Sized>(&self, rows: usize, input_rng: &mut R, noise_rng: &mut R) -> Dataset {
        let inputs = self.sample_inputs(rows, input_rng);
        let targets = self.label(&inputs, noise_rng);
        Dataset::new(inputs, targets, self.kind.task_kind()).expect("generated data is well-formed")
    }
}

/// Output of [`make_synthetic_suite`].
#[derive(Clone, Debug)]
pub struct SyntheticSuite {
    pub tasks: Vec<Task>,
    pub validation: ValidationSet,
    /// Ground-truth weight vector per task (index 0 = main).
    pub generators: Vec<TaskGenerator>,
}

impl SyntheticSuite {
    pub fn into_parts(self) -> (Vec<Task>, ValidationSet) {
        (self.tasks, self.validation)
    }
}

// Sub-stream layout inside Stream::Data.
const TRUTH_MAIN: u64 = 0;
const VAL_INPUTS: u64 = 1;
const VAL_NOISE: u64 = 2;
fn aux_direction(a: usize) -> u64 {
    16 + a as u64
}
fn task_inputs(t: usize) -> u64 {
    1024 + 2 * t as u64
}
fn task_noise(t: usize) -> u64 {
    1025 + 2 * t as u64
}

/// Ground truth for an auxiliary: `ρ·w* + (1 − ρ)·u`, `u` drawn like `w*`.
pub fn mix_truth(main: &[f64], independent: &[f64], relatedness: f64) -> Vec<f64> {
    main.iter()
        .zip(independent)
        .map(|(m, u)| relatedness * m + (1.0 - relatedness) * u)
        .collect()
}

fn draw_truth<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

/// Main task plus auxiliaries whose teachers interpolate between the main
/// teacher and independent noise. Pure in `(cfg, seed)`.
pub fn make_synthetic_suite(cfg: &SuiteConfig, seed: u64) -> Result<SyntheticSuite> {
    cfg.validate()?;
    let data = Stream::Data as u64;
    let dim = cfg.input_dim;
    let main_truth = draw_truth(dim, &mut sub_stream_rng(seed, data, TRUTH_MAIN));
    let mut generators = vec![TaskGenerator {
        truth: main_truth.clone(),
        kind: cfg.main_kind,
        noise_std: cfg.noise_std,
        label_flip: cfg.label_flip,
    }];
    for (a, spec) in cfg.auxiliaries.iter().enumerate() {
        let u = draw_truth(dim, &mut sub_stream_rng(seed, data, aux_direction(a)));
        generators.push(TaskGenerator {
            truth: mix_truth(&main_truth, &u, spec.relatedness),
            kind: spec.kind,
            noise_std: cfg.noise_std,
            label_flip: cfg.label_flip,
        });
    }

    let sizes: Vec<usize> = std::iter::once(cfg.main_train_size)
        .chain(cfg.auxiliaries.iter().map(|a| a.train_size))
        .collect();
    let mut tasks = Vec::with_capacity(sizes.len());
    for (t, (gen, &n)) in generators.iter().zip(&sizes).enumerate() {
        let train = gen.dataset(
            n,
            &mut sub_stream_rng(seed, data, task_inputs(t)),
            &mut sub_stream_rng(seed, data, task_noise(t)),
        );
        tasks.push(Task {
            id: t,
            role: if t == 0 { TaskRole::Main } else { TaskRole::Auxiliary },
            train,
        });
    }

    let main = &generators[0];
    let mut val_inputs_rng = sub_stream_rng(seed, data, VAL_INPUTS);
    let mut inputs = main.sample_inputs(cfg.val_size, &mut val_inputs_rng);
    // Continuous inputs collide with probability zero, but disjointness is a
    // hard invariant, so redraw any row that matches a training input.
    let train_inputs: HashSet<Vec<u64>> = (0..tasks[0].train.len())
        .map(|i| row_key(tasks[0].train.inputs().row(i), &[]))
        .collect();
    for i in 0..inputs.rows() {
        while train_inputs.contains(&row_key(inputs.row(i), &[])) {
            let fresh = main.sample_inputs(1, &mut val_inputs_rng);
            inputs.row_mut(i).copy_from_slice(fresh.row(0));
        }
    }
    let targets = main.label(&inputs, &mut sub_stream_rng(seed, data, VAL_NOISE));
    let val = Dataset::new(inputs, targets, main.kind.task_kind())?;
    let validation = ValidationSet::new(val, &tasks[0].train)?;
    Ok(SyntheticSuite {
        tasks,
        validation,
        generators,
    })
}

/// Column layout of a task CSV file: `features` numeric columns followed by
/// the target column(s) for `kind`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: usize,
    pub kind: TaskKind,
}

/// Reads a headered CSV of numeric features and targets, rows in file order.
pub fn load_task_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let expected = schema.features + schema.kind.target_cols();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.len() != expected {
        return Err(parse_err(
            1,
            format!("header has {} columns, schema expects {expected}", headers.len()),
        ));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != expected {
            return Err(parse_err(
                line,
                format!("row has {} columns, expected {expected}", record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {} (`{field}`) is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {} is not finite", c + 1)));
            }
            if c < schema.features {
                inputs.push(v);
            } else {
                targets.push(v);
            }
        }
        if let TaskKind::Classification { classes } = schema.kind {
            let y = *targets.last().expect("one target per row");
            if y.fract() != 0.0 || y < 0.0 || y >= classes as f64 {
                return Err(parse_err(line, format!("label {y} is not a class in [0, {classes})")));
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::arg(format!("{}: no data rows", path.display())));
    }
    Dataset::new(
        Matrix::new(rows, schema.features, inputs)?,
        Matrix::new(rows, schema.kind.target_cols(), targets)?,
        schema.kind,
    )
}
