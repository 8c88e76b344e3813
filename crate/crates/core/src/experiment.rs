//! Experiment configuration files and the run/compare drivers behind the CLI.
//!
//! A config is a TOML document:
//!
//! ```toml
//! seed = 0
//! schedule = "learned"
//! schedules = ["uniform", "learned"]   # compare only
//! seeds = [0, 1, 2]                    # compare only; defaults to [seed]
//! out_dir = "out"
//!
//! [training]
//! steps = 500
//!
//! [suite]
//! input_dim = 8
//! main_train_size = 40
//! val_size = 200
//! auxiliaries = [{ relatedness = 0.9, train_size = 400 }]
//! ```
//!
//! Instead of `[suite]`, a `[csv]` table may list task files; relative paths
//! resolve against the config file's directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_model, save_scheduler};
use crate::error::{Error, Result};
use crate::model::TaskKind;
use crate::schedules::ScheduleKind;
use crate::tasks::{load_task_csv, make_synthetic_suite, CsvSchema, SuiteConfig, Task, TaskRole, ValidationSet};
use crate::training::{run_training, LoopConfig, ModelSettings, SchedulerSettings, TrainingOutcome, TrainingSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvTaskFile {
    pub path: PathBuf,
    pub kind: TaskKind,
}

/// Task data read from CSV files sharing one feature layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvTasks {
    pub features: usize,
    pub main: CsvTaskFile,
    /// Validation rows for the main task; same columns as `main`.
    pub validation: PathBuf,
    #[serde(default)]
    pub auxiliaries: Vec<CsvTaskFile>,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Learned
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub schedules: Vec<ScheduleKind>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub scheduler: SchedulerSettings,
    #[serde(default)]
    pub suite: Option<SuiteConfig>,
    #[serde(default)]
    pub csv: Option<CsvTasks>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads, resolves relative paths and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, path, base)
    }

    /// Parses TOML text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        if let Some(dir) = &cfg.out_dir {
            cfg.out_dir = Some(resolve(base, dir));
        }
        if let Some(csv) = &mut cfg.csv {
            csv.main.path = resolve(base, &csv.main.path);
            csv.validation = resolve(base, &csv.validation);
            for a in &mut csv.auxiliaries {
                a.path = resolve(base, &a.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.suite, &self.csv) {
            (Some(s), None) => s.validate()?,
            (None, Some(c)) => {
                if c.features == 0 {
                    return Err(Error::config("csv.features", "must be >= 1"));
                }
            }
            (None, None) => return Err(Error::config("suite", "either [suite] or [csv] is required")),
            (Some(_), Some(_)) => return Err(Error::config("csv", "[suite] and [csv] are mutually exclusive")),
        }
        self.loop_config(self.schedule, self.seed).validate()?;
        for &s in &self.schedules {
            self.loop_config(s, self.seed).validate()?;
        }
        Ok(())
    }

    pub fn loop_config(&self, schedule: ScheduleKind, seed: u64) -> LoopConfig {
        LoopConfig {
            schedule,
            seed,
            training: self.training.clone(),
            model: self.model.clone(),
            scheduler: self.scheduler.clone(),
        }
    }

    /// Task data for `seed`. CSV data is the same for every seed.
    pub fn build_tasks(&self, seed: u64) -> Result<(Vec<Task>, ValidationSet)> {
        if let Some(suite) = &self.suite {
            return Ok(make_synthetic_suite(suite, seed)?.into_parts());
        }
        let csv = self
            .csv
            .as_ref()
            .ok_or_else(|| Error::config("suite", "no task data configured"))?;
        let schema = |kind| CsvSchema {
            features: csv.features,
            kind,
        };
        let main = load_task_csv(&csv.main.path, &schema(csv.main.kind))?;
        let val = load_task_csv(&csv.validation, &schema(csv.main.kind))?;
        let validation = ValidationSet::new(val, &main)?;
        let mut tasks = vec![Task {
            id: 0,
            role: TaskRole::Main,
            train: main,
        }];
        for (i, a) in csv.auxiliaries.iter().enumerate() {
            tasks.push(Task {
                id: i + 1,
                role: TaskRole::Auxiliary,
                train: load_task_csv(&a.path, &schema(a.kind))?,
            });
        }
        Ok((tasks, validation))
    }

    fn compare_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }
}

/// Output of [`run_experiment`].
#[derive(Debug)]
pub struct RunReport {
    pub outcome: TrainingOutcome,
    pub wall_clock_secs: f64,
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const LOG_FILE: &str = "log.jsonl";
pub const TIMING_FILE: &str = "timing.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const RANKING_FILE: &str = "ranking.csv";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Summary table: header plus one row. Contains no timing so that reruns are
/// byte-identical.
pub fn summary_csv(schedule: ScheduleKind, seed: u64, outcome: &TrainingOutcome) -> String {
    let log = &outcome.log;
    let mut out =
        String::from("schedule,seed,steps,initial_val_loss,final_val_loss,oracle_queries,replay_size,stopped_early");
    for k in 0..log.selection_counts.len() {
        let _ = write!(out, ",selected_task_{k}");
    }
    out.push('\n');
    let _ = write!(
        out,
        "{schedule},{seed},{},{},{},{},{},{}",
        log.steps(),
        log.initial_val_loss,
        log.final_val_loss,
        log.oracle_queries,
        outcome.replay.len(),
        log.stopped_early
    );
    for c in &log.selection_counts {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    out
}

/// Runs the configured schedule once and writes log, summary, timing and
/// checkpoints to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let (tasks, val) = cfg.build_tasks(cfg.seed)?;
    let loop_cfg = cfg.loop_config(cfg.schedule, cfg.seed);
    let start = Instant::now();
    let outcome = run_training(&loop_cfg, &tasks, &val)?;
    let wall_clock_secs = start.elapsed().as_secs_f64();
    log::info!(
        "{} seed {}: val loss {} -> {} in {} steps",
        cfg.schedule,
        cfg.seed,
        outcome.log.initial_val_loss,
        outcome.log.final_val_loss,
        outcome.log.steps()
    );

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(LOG_FILE);
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut w = BufWriter::new(file);
    for r in &outcome.log.records {
        let line = serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&log_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&log_path, e))?;

    write_file(
        &out_dir.join(SUMMARY_FILE),
        &summary_csv(cfg.schedule, cfg.seed, &outcome),
    )?;
    let timing = serde_json::json!({ "wall_clock_secs": wall_clock_secs });
    write_file(&out_dir.join(TIMING_FILE), &format!("{timing}\n"))?;
    save_model(&outcome.model, out_dir, "model")?;
    save_scheduler(&outcome.scheduler, out_dir, "scheduler")?;
    Ok(RunReport {
        outcome,
        wall_clock_secs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub schedule: ScheduleKind,
    pub seed: u64,
    pub final_main_val_loss: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingRow {
    pub rank: usize,
    pub schedule: ScheduleKind,
    pub mean_final_val_loss: f64,
    pub runs: usize,
}

/// Mean final loss per schedule, best first; ties keep config order.
pub fn rank_schedules(schedules: &[ScheduleKind], rows: &[ComparisonRow]) -> Vec<RankingRow> {
    let mut ranking: Vec<RankingRow> = schedules
        .iter()
        .map(|&s| {
            let losses: Vec<f64> = rows
                .iter()
                .filter(|r| r.schedule == s)
                .map(|r| r.final_main_val_loss)
                .collect();
            RankingRow {
                rank: 0,
                schedule: s,
                mean_final_val_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
                runs: losses.len(),
            }
        })
        .collect();
    ranking.sort_by(|a, b| a.mean_final_val_loss.total_cmp(&b.mean_final_val_loss));
    for (i, r) in ranking.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    ranking
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every listed schedule for every seed on shared data, in parallel,
/// and writes the comparison and ranking tables.
pub fn compare_schedules(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ComparisonRow>> {
    let mut schedules = cfg.schedules.clone();
    schedules.dedup();
    if schedules.len() < 2 {
        return Err(Error::config("schedules", "compare needs at least two schedules"));
    }
    let seeds = cfg.compare_seeds();
    let data: Vec<(Vec<Task>, ValidationSet)> = seeds.iter().map(|&s| cfg.build_tasks(s)).collect::<Result<_>>()?;
    let jobs: Vec<(ScheduleKind, usize)> = schedules
        .iter()
        .flat_map(|&s| (0..seeds.len()).map(move |i| (s, i)))
        .collect();
    let rows: Vec<ComparisonRow> = jobs
        .par_iter()
        .map(|&(schedule, i)| {
            let (tasks, val) = &data[i];
            let out = run_training(&cfg.loop_config(schedule, seeds[i]), tasks, val)?;
            log::info!(
                "{schedule} seed {}: final val loss {}",
                seeds[i],
                out.log.final_val_loss
            );
            Ok(ComparisonRow {
                schedule,
                seed: seeds[i],
                final_main_val_loss: out.log.final_val_loss,
                steps: out.log.steps(),
            })
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_csv(&out_dir.join(COMPARISON_FILE), &rows)?;
    write_csv(&out_dir.join(RANKING_FILE), &rank_schedules(&schedules, &rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
schedule = "uniform"

[training]
steps = 10
batch_size = 4

[model]
hidden = [3]

[suite]
input_dim = 3
main_train_size = 20
val_size = 20
auxiliaries = [{ relatedness = 0.5, train_size = 20 }]
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.toml"), Path::new("/base"))
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.training.steps, 10);
        assert_eq!(cfg.training.beta, 0.9);
        assert_eq!(cfg.training.gamma, 0.7);
        assert_eq!(cfg.scheduler.hidden, 200);
        assert_eq!(cfg.scheduler.learning_rate, 1e-4);
        assert_eq!(cfg.model.learning_rate, 1e-3);
    }

    #[test]
    fn unknown_key_is_a_parse_error_naming_it() {
        let text = MINIMAL.replace("steps = 10", "stepz = 10");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
        assert!(err.to_string().contains("stepz"), "{err}");
    }

    #[test]
    fn out_of_range_beta_names_the_key() {
        let text = MINIMAL.replace("steps = 10", "steps = 10\nbeta = 1.5");
        let err = parse(&text).unwrap_err();
        assert!(err.is_usage_error());
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn data_source_is_required_and_exclusive() {
        let no_data = MINIMAL.split("[suite]").next().unwrap().to_string();
        assert!(matches!(parse(&no_data), Err(Error::Config { .. })));
        let both = format!(
            "{MINIMAL}\n[csv]\nfeatures = 3\nvalidation = \"v.csv\"\nmain = {{ path = \"m.csv\", kind = {{ kind = \"regression\", outputs = 1 }} }}\n"
        );
        assert!(matches!(parse(&both), Err(Error::Config { .. })));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let text = MINIMAL.replace(
            "schedule = \"uniform\"",
            "schedule = \"uniform\"\nout_dir = \"results\"",
        );
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.out_dir.as_deref(), Some(Path::new("/base/results")));
    }

    #[test]
    fn ranking_orders_by_mean() {
        let row = |schedule, seed, loss| ComparisonRow {
            schedule,
            seed,
            final_main_val_loss: loss,
            steps: 5,
        };
        let rows = vec![
            row(ScheduleKind::Uniform, 0, 2.0),
            row(ScheduleKind::Uniform, 1, 4.0),
            row(ScheduleKind::Learned, 0, 1.0),
            row(ScheduleKind::Learned, 1, 3.0),
        ];
        let r = rank_schedules(&[ScheduleKind::Uniform, ScheduleKind::Learned], &rows);
        assert_eq!(r[0].schedule, ScheduleKind::Learned);
        assert_eq!(r[0].mean_final_val_loss, 2.0);
        assert_eq!(r[1].rank, 2);
        assert_eq!(r[1].runs, 2);
    }
}
