use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csqpe"));
    cmd.env_remove("CSQPE_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn csqpe")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_SPEC: &str = r#"{"models": ["tfi4"], "alphas": [0.25], "algorithms": ["cs_qpe", "qmegs"],
    "t_grid": [60], "trials_per_cell": 2, "seed": 5, "j_trials": 10}"#;

#[test]
fn help_lists_every_flag() {
    let top = stdout(&run(&["--help"]));
    for flag in ["--seed", "--threads", "--out", "estimate", "baseline", "bench", "verify", "signal"] {
        assert!(top.contains(flag), "missing {flag} in:\n{top}");
    }
    assert!(top.contains("CSQPE_THREADS"));
    let signal = stdout(&run(&["signal", "--help"]));
    for flag in ["--model", "--alpha", "--times", "--mh"] {
        assert!(signal.contains(flag), "missing {flag}");
    }
    assert!(stdout(&run(&["estimate", "--help"])).contains("--config"));
    assert!(stdout(&run(&["bench", "--help"])).contains("--spec"));
    assert!(stdout(&run(&["verify", "--help"])).contains("--suite"));
}

#[test]
fn estimate_prints_a_reproducible_report() {
    let cfg = configs().join("tfi8_a8.json");
    let a = run(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["seed"], 7);
    assert!(v["e_star"].as_f64().unwrap() > 0.0);
    assert!(v["abs_error"].as_f64().unwrap() < 0.01);
    let b = run(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["estimate", "--config", cfg.to_str().unwrap(), "--seed", "8"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&c)).unwrap();
    assert_eq!(v["seed"], 8);
}

#[test]
fn baseline_runs_from_config() {
    let cfg = configs().join("fh4_qmegs.json");
    let o = run(&["baseline", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["algorithm"], "qmegs");
    assert_eq!(v["label"], "reimplementation");
}

#[test]
fn verify_dirichlet_is_clean() {
    let o = run(&["verify", "--suite", "dirichlet"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["lemma_id"], "dirichlet");
    assert_eq!(v[0]["violations"], 0);
}

#[test]
fn signal_is_reproducible() {
    let args = ["signal", "--model", "tfi8", "--alpha", "0.125", "--times", "0..64", "--mh", "100", "--seed", "7"];
    let a = run(&args);
    assert!(a.status.success());
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 64);
    assert!(text.lines().all(|l| l.split(',').count() == 4 && l.ends_with(",100")));
    assert_eq!(a.stdout, run(&args).stdout);
    let mut other = args;
    other[10] = "8";
    assert_ne!(a.stdout, run(&other).stdout);
}

#[test]
fn configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = write(dir.path(), "a.json", r#"{"model": "tfi8", "alpha": 0.1, "colour": 1}"#);
    let no_estimator = write(dir.path(), "b.json", r#"{"model": "tfi8", "alpha": 0.1}"#);
    let bad_algo = write(dir.path(), "c.json", r#"{"algorithms": ["fft"]}"#);
    let small = write(dir.path(), "d.json", SMALL_SPEC);
    let cases: Vec<Vec<String>> = vec![
        vec!["estimate".into(), "--config".into(), unknown_key.display().to_string()],
        vec!["estimate".into(), "--config".into(), no_estimator.display().to_string()],
        vec!["estimate".into(), "--config".into(), dir.path().join("missing.json").display().to_string()],
        vec![
            "bench".into(),
            "--spec".into(),
            bad_algo.display().to_string(),
            "--out".into(),
            dir.path().join("o").display().to_string(),
        ],
        vec!["bench".into(), "--spec".into(), small.display().to_string()],
        vec!["verify".into(), "--suite".into(), "nonsense".into()],
        vec![
            "signal".into(),
            "--model".into(),
            "tfi8".into(),
            "--alpha".into(),
            "0.1".into(),
            "--times".into(),
            "5..2".into(),
        ],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let o = bin().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    assert!(!dir.path().join("o").exists(), "bench did work before rejecting the spec");
    let o = bin().env("CSQPE_THREADS", "0").args(["verify", "--suite", "dirichlet"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.json", SMALL_SPEC);
    let blocker = write(dir.path(), "file", "not a directory");
    let o = run(&["bench", "--spec", spec.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.json", SMALL_SPEC);
    let mut csvs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = bin()
            .env("CSQPE_THREADS", threads)
            .args(["bench", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("results.json").exists());
        assert!(out.join("plots/tfi4_a0.25_qmegs_N60.dat").exists());
        csvs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(
        text.starts_with("model,alpha,algorithm,N,trials,mean_err,median_err,fail,mean_t_total,t_max,mean_samples\n")
    );
}
