//! C interface to `mtlsched`.
//!
//! Objects are opaque handles created and freed through this API. Every
//! fallible call returns an [`MtlsStatus`]; on failure a description is
//! available from [`mtls_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mtlsched::error::Error;
use mtlsched::experiment::{run_experiment, ExperimentConfig};
use mtlsched::numcore::ParamVector;
use mtlsched::oracle::oracle_weights;
use mtlsched::schedules::ScheduleKind;
use mtlsched::training::{run_training, TrainingOutcome};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    Numeric = 6,
    Dimension = 7,
    Argument = 8,
    Precondition = 9,
    Internal = 10,
}

/// A loaded, validated experiment configuration.
pub struct MtlsExperiment {
    config: ExperimentConfig,
}

/// The result of one training run.
pub struct MtlsRun {
    outcome: TrainingOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MtlsStatus {
    match e {
        Error::Dimension(_) => MtlsStatus::Dimension,
        Error::Numeric(_) => MtlsStatus::Numeric,
        Error::Argument(_) => MtlsStatus::Argument,
        Error::Precondition(_) => MtlsStatus::Precondition,
        Error::Parse { .. } => MtlsStatus::Parse,
        Error::Config { .. } => MtlsStatus::Config,
        Error::AtStep { source, .. } => status_of(source),
        Error::Io { .. } => MtlsStatus::Io,
        Error::Serde(_) => MtlsStatus::Internal,
    }
}

struct Fail(MtlsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MtlsStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MtlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MtlsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            MtlsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MtlsStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Description of the last failure on this thread, or NULL after a success.
/// The string stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mtls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads and validates a TOML experiment file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mtls_experiment_load(path: *const c_char, out: *mut *mut MtlsExperiment) -> MtlsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let config = ExperimentConfig::load(path)?;
        *out = Box::into_raw(Box::new(MtlsExperiment { config }));
        Ok(())
    })
}

/// Parses TOML config text; relative paths resolve against `base_dir`.
///
/// # Safety
/// `text` and `base_dir` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mtls_experiment_parse(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut MtlsExperiment,
) -> MtlsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let base = str_arg(base_dir, "base_dir")?;
        let config = ExperimentConfig::parse(text, Path::new("<string>"), Path::new(base))?;
        *out = Box::into_raw(Box::new(MtlsExperiment { config }));
        Ok(())
    })
}

/// # Safety
/// `exp` must be NULL or a handle from this API that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mtls_experiment_free(exp: *mut MtlsExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtls_experiment_set_seed(exp: *mut MtlsExperiment, seed: u64) -> MtlsStatus {
    guard(|| {
        out_arg(exp, "exp")?.config.seed = seed;
        Ok(())
    })
}

/// Selects the schedule by name: uniform, constant, exponential, mixture or
/// learned.
///
/// # Safety
/// `exp` must be a live handle; `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mtls_experiment_set_schedule(exp: *mut MtlsExperiment, name: *const c_char) -> MtlsStatus {
    guard(|| {
        let exp = out_arg(exp, "exp")?;
        let kind: ScheduleKind = str_arg(name, "name")?.parse()?;
        let mut next = exp.config.clone();
        next.schedule = kind;
        next.validate()?;
        exp.config = next;
        Ok(())
    })
}

/// Trains in memory without writing files.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mtls_run(exp: *const MtlsExperiment, out: *mut *mut MtlsRun) -> MtlsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = &ref_arg(exp, "exp")?.config;
        let (tasks, val) = cfg.build_tasks(cfg.seed)?;
        let outcome = run_training(&cfg.loop_config(cfg.schedule, cfg.seed), &tasks, &val)?;
        *out = Box::into_raw(Box::new(MtlsRun { outcome }));
        Ok(())
    })
}

/// Trains and writes the step log, summary, timing and checkpoints to
/// `out_dir`. `out` may be NULL when the run handle is not needed.
///
/// # Safety
/// `exp` must be a live handle; `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_to_dir(
    exp: *const MtlsExperiment,
    out_dir: *const c_char,
    out: *mut *mut MtlsRun,
) -> MtlsStatus {
    guard(|| {
        let cfg = &ref_arg(exp, "exp")?.config;
        let dir = str_arg(out_dir, "out_dir")?;
        let report = run_experiment(cfg, Path::new(dir))?;
        if let Some(out) = out.as_mut() {
            *out = Box::into_raw(Box::new(MtlsRun {
                outcome: report.outcome,
            }));
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a handle from this API that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_free(run: *mut MtlsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of steps executed; 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_steps(run: *const MtlsRun) -> usize {
    run.as_ref().map_or(0, |r| r.outcome.log.steps())
}

/// Number of tasks (main plus auxiliaries); 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_num_tasks(run: *const MtlsRun) -> usize {
    run.as_ref().map_or(0, |r| r.outcome.log.selection_counts.len())
}

/// Number of oracle queries (equal to the replay buffer size).
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_oracle_queries(run: *const MtlsRun) -> u64 {
    run.as_ref().map_or(0, |r| r.outcome.log.oracle_queries)
}

/// Validation loss before and after training.
///
/// # Safety
/// `run` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_val_losses(run: *const MtlsRun, initial: *mut f64, final_: *mut f64) -> MtlsStatus {
    guard(|| {
        let log = &ref_arg(run, "run")?.outcome.log;
        *out_arg(initial, "initial")? = log.initial_val_loss;
        *out_arg(final_, "final")? = log.final_val_loss;
        Ok(())
    })
}

/// Copies the per-task selection counts into `counts[0..len]`; `len` must
/// equal [`mtls_run_num_tasks`].
///
/// # Safety
/// `run` must be a live handle; `counts` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mtls_run_selection_counts(run: *const MtlsRun, counts: *mut u64, len: usize) -> MtlsStatus {
    guard(|| {
        let src = &ref_arg(run, "run")?.outcome.log.selection_counts;
        if counts.is_null() {
            return Err(null("counts"));
        }
        if len != src.len() {
            return Err(Fail(
                MtlsStatus::Dimension,
                format!("buffer holds {len} counts, run has {} tasks", src.len()),
            ));
        }
        std::slice::from_raw_parts_mut(counts, len).copy_from_slice(src);
        Ok(())
    })
}

/// Oracle task weights from precomputed gradients.
///
/// `grads` holds `num_tasks` rows of `dim` values (row-major); `grad_val`
/// holds `dim` values; `weights` receives `num_tasks` values.
///
/// # Safety
/// All buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mtls_oracle_weights(
    grad_val: *const f64,
    grads: *const f64,
    num_tasks: usize,
    dim: usize,
    main_index: usize,
    weights: *mut f64,
) -> MtlsStatus {
    guard(|| {
        if grad_val.is_null() {
            return Err(null("grad_val"));
        }
        if grads.is_null() {
            return Err(null("grads"));
        }
        if weights.is_null() {
            return Err(null("weights"));
        }
        if dim == 0 || num_tasks == 0 {
            return Err(Fail(MtlsStatus::Argument, "dim and num_tasks must be >= 1".into()));
        }
        let val = ParamVector::new(std::slice::from_raw_parts(grad_val, dim).to_vec());
        let all = std::slice::from_raw_parts(grads, num_tasks * dim);
        let rows: Vec<ParamVector> = all.chunks_exact(dim).map(|c| ParamVector::new(c.to_vec())).collect();
        let w = oracle_weights(&val, &rows, main_index)?;
        std::slice::from_raw_parts_mut(weights, num_tasks).copy_from_slice(&w);
        Ok(())
    })
}
