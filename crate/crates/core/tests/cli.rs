use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"
seed = 1
schedule = "learned"

[training]
steps = 10
batch_size = 4

[model]
hidden = [3]

[scheduler]
hidden = 16

[suite]
input_dim = 3
main_train_size = 20
val_size = 30
auxiliaries = [
  { relatedness = 0.9, train_size = 20 },
  { relatedness = 0.0, train_size = 20, kind = "classification" },
]
"#;

fn mtlsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtlsched"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_log_summary_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = mtlsched(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let log = fs::read_to_string(out.join("log.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 10);
    for (t, r) in records.iter().enumerate() {
        assert_eq!(r["t"], t);
        let w: Vec<f64> = serde_json::from_value(r["weights"].clone()).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w[r["task"].as_u64().unwrap() as usize] > 0.0);
    }

    let mut rdr = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let get = |name: &str| rows[0][headers.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(get("steps"), "10");
    assert_eq!(get("schedule"), "learned");
    let selected: u64 = (0..3)
        .map(|k| get(&format!("selected_task_{k}")).parse::<u64>().unwrap())
        .sum();
    assert_eq!(selected, 10);
    assert_eq!(get("oracle_queries"), get("replay_size"));

    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert!(timing["wall_clock_secs"].as_f64().unwrap() >= 0.0);
    for f in [
        "model.params.bin",
        "model.shape.json",
        "scheduler.params.bin",
        "scheduler.shape.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let model = mtlsched::checkpoint::load_model(&out, "model").unwrap();
    assert_eq!(model.num_tasks(), 3);
}

#[test]
fn reruns_are_byte_identical_and_seed_override_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let summary = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", cfg.as_str(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(mtlsched(&args).status.success());
        fs::read(out.join("summary.csv")).unwrap()
    };
    let a = summary("a", &[]);
    let b = summary("b", &[]);
    assert_eq!(a, b);
    let c = summary("c", &["--seed", "99"]);
    assert_ne!(a, c);
    assert!(String::from_utf8(c).unwrap().contains("learned,99,"));
}

#[test]
fn bad_beta_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("steps = 10", "steps = 10\nbeta = 1.5"));
    let o = mtlsched(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("[model]", "[model]\nwidth = 3"));
    let o = mtlsched(&["run", &cfg, "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));

    let o = mtlsched(&["run", "/nonexistent/exp.toml", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_output_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = mtlsched(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("out_dir"));
}

#[test]
fn out_dir_from_config_is_relative_to_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("out_dir = \"results\"\n{MINIMAL}"));
    assert!(mtlsched(&["run", &cfg]).status.success());
    assert!(dir.path().join("results/summary.csv").exists());
}

#[test]
fn numeric_failure_exits_1_with_step() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace(
        "hidden = [3]",
        "hidden = [3]\noptimizer = \"sgd\"\nlearning_rate = 1e300",
    );
    let cfg = write_config(dir.path(), &text);
    let o = mtlsched(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("step "), "{}", stderr(&o));
}

#[test]
fn compare_writes_one_row_per_schedule_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("schedules = [\"uniform\", \"learned\"]\nseeds = [0, 1, 2, 3, 4]\n{MINIMAL}");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("cmp");
    let o = mtlsched(&["compare", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("comparison.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["schedule", "seed", "final_main_val_loss", "steps"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| &r[3] == "10"));

    let mut rdr = csv::Reader::from_path(out.join("ranking.csv")).unwrap();
    let ranking: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(ranking.len(), 2);
    assert_eq!(&ranking[0][0], "1");

    // Parallel execution does not change the table.
    let out2 = dir.path().join("cmp2");
    assert!(mtlsched(&["compare", &cfg, "--out", out2.to_str().unwrap()])
        .status
        .success());
    assert_eq!(
        fs::read(out.join("comparison.csv")).unwrap(),
        fs::read(out2.join("comparison.csv")).unwrap()
    );
}

#[test]
fn compare_with_one_schedule_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("schedules = [\"uniform\"]\n{MINIMAL}"));
    let o = mtlsched(&["compare", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schedules"));
}

#[test]
fn csv_tasks_run() {
    let dir = tempfile::tempdir().unwrap();
    let rows = |offset: f64, n: usize| {
        let mut s = String::from("x0,x1,y\n");
        for i in 0..n {
            let x0 = (i as f64 * 0.37 + offset).sin();
            let x1 = (i as f64 * 0.11 + offset).cos();
            s.push_str(&format!("{x0},{x1},{}\n", 0.5 * x0 - x1));
        }
        s
    };
    fs::write(dir.path().join("main.csv"), rows(0.0, 20)).unwrap();
    fs::write(dir.path().join("val.csv"), rows(100.0, 15)).unwrap();
    let aux: String = std::iter::once("x0,x1,label\n".to_string())
        .chain((0..20).map(|i| format!("{},{},{}\n", i as f64 * 0.1, 1.0 - i as f64 * 0.05, i % 2)))
        .collect();
    fs::write(dir.path().join("aux.csv"), aux).unwrap();
    let text = r#"
schedule = "exponential"

[training]
steps = 15
batch_size = 5

[model]
hidden = [2]

[csv]
features = 2
validation = "val.csv"
main = { path = "main.csv", kind = { kind = "regression", outputs = 1 } }
auxiliaries = [{ path = "aux.csv", kind = { kind = "classification", classes = 2 } }]
"#;
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    let o = mtlsched(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("log.jsonl")).unwrap().lines().count(), 15);
}
