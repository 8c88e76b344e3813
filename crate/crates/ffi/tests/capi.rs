use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mtlsched_ffi::*;

const CONFIG: &str = r#"
seed = 2
schedule = "learned"

[training]
steps = 40
batch_size = 4

[model]
hidden = [3]

[scheduler]
hidden = 8

[suite]
input_dim = 3
main_train_size = 20
val_size = 20
auxiliaries = [{ relatedness = 0.7, train_size = 20 }]
"#;

fn parse(text: &str) -> (MtlsStatus, *mut MtlsExperiment) {
    let text = CString::new(text).unwrap();
    let base = CString::new(".").unwrap();
    let mut exp = ptr::null_mut();
    let status = unsafe { mtls_experiment_parse(text.as_ptr(), base.as_ptr(), &mut exp) };
    (status, exp)
}

fn last_error() -> String {
    let p = mtls_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn run_round_trip() {
    let (status, exp) = parse(CONFIG);
    assert_eq!(status, MtlsStatus::Ok);
    assert!(mtls_last_error().is_null());
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(mtls_run(exp, &mut run), MtlsStatus::Ok);
        assert_eq!(mtls_run_steps(run), 40);
        assert_eq!(mtls_run_num_tasks(run), 2);
        let mut counts = [0u64; 2];
        assert_eq!(mtls_run_selection_counts(run, counts.as_mut_ptr(), 2), MtlsStatus::Ok);
        assert_eq!(counts.iter().sum::<u64>(), 40);
        let (mut initial, mut last) = (0.0, 0.0);
        assert_eq!(mtls_run_val_losses(run, &mut initial, &mut last), MtlsStatus::Ok);
        assert!(initial.is_finite() && last.is_finite());
        assert!(mtls_run_oracle_queries(run) <= 40);

        let mut short = [0u64; 1];
        assert_eq!(
            mtls_run_selection_counts(run, short.as_mut_ptr(), 1),
            MtlsStatus::Dimension
        );
        mtls_run_free(run);
        mtls_experiment_free(exp);
    }
}

#[test]
fn same_seed_same_result() {
    let (_, exp) = parse(CONFIG);
    let losses = |seed: u64| unsafe {
        assert_eq!(mtls_experiment_set_seed(exp, seed), MtlsStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(mtls_run(exp, &mut run), MtlsStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        mtls_run_val_losses(run, &mut a, &mut b);
        mtls_run_free(run);
        (a.to_bits(), b.to_bits())
    };
    assert_eq!(losses(5), losses(5));
    unsafe { mtls_experiment_free(exp) };
}

#[test]
fn run_to_dir_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, exp) = parse(CONFIG);
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(mtls_run_to_dir(exp, out.as_ptr(), ptr::null_mut()), MtlsStatus::Ok);
        mtls_experiment_free(exp);
    }
    for f in ["summary.csv", "log.jsonl", "model.params.bin", "scheduler.shape.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn errors_map_to_codes() {
    let (status, exp) = parse(&CONFIG.replace("steps = 40", "steps = 40\nbeta = 1.5"));
    assert_eq!(status, MtlsStatus::Config);
    assert!(exp.is_null());
    assert!(last_error().contains("beta"));

    let (status, _) = parse("not = [valid");
    assert_eq!(status, MtlsStatus::Parse);

    let mut exp = ptr::null_mut();
    assert_eq!(
        unsafe { mtls_experiment_load(ptr::null(), &mut exp) },
        MtlsStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/config.toml").unwrap();
    assert_eq!(
        unsafe { mtls_experiment_load(missing.as_ptr(), &mut exp) },
        MtlsStatus::Io
    );

    let (_, exp) = parse(CONFIG);
    let bad = CString::new("sometimes").unwrap();
    assert_eq!(
        unsafe { mtls_experiment_set_schedule(exp, bad.as_ptr()) },
        MtlsStatus::Argument
    );
    let ok = CString::new("uniform").unwrap();
    assert_eq!(
        unsafe { mtls_experiment_set_schedule(exp, ok.as_ptr()) },
        MtlsStatus::Ok
    );
    unsafe { mtls_experiment_free(exp) };

    // Freeing NULL is a no-op.
    unsafe {
        mtls_experiment_free(ptr::null_mut());
        mtls_run_free(ptr::null_mut());
    }
    assert_eq!(unsafe { mtls_run_steps(ptr::null()) }, 0);
}

#[test]
fn oracle_weights_from_buffers() {
    let grad_val = [1.0, 0.0];
    let grads = [2.0, 5.0, -1.0, 1.0, 3.0, -4.0];
    let mut w = [0.0; 3];
    let status = unsafe { mtls_oracle_weights(grad_val.as_ptr(), grads.as_ptr(), 3, 2, 0, w.as_mut_ptr()) };
    assert_eq!(status, MtlsStatus::Ok);
    assert!((w[0] - 0.4).abs() < 1e-12 && w[1] == 0.0 && (w[2] - 0.6).abs() < 1e-12);
    let status = unsafe { mtls_oracle_weights(grad_val.as_ptr(), grads.as_ptr(), 3, 0, 0, w.as_mut_ptr()) };
    assert_eq!(status, MtlsStatus::Argument);
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mtlsched.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "mtls_experiment_load",
        "mtls_run",
        "mtls_run_free",
        "mtls_last_error",
        "MTLS_STATUS_CONFIG",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Compile check when a C compiler is around.
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
