use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rqnls_cli::checkpoint::{load_checkpoint, Snapshot};
use rqnls_cli::config::parse_config_str;
use rqnls_cli::output::sha256_hex;

const RESONANT: &str = r#"system = "resonant1d"
J = 1
Nx = 128
L = 16.0
dt = 0.01
T = 1.0
cadence = 0.1
seed = 5
[initial]
norm = 0.5
"#;

const CYLINDER: &str = r#"system = "cylinder"
J = 1
Nx = 256
Ny = 16
L = 32.0
dt = 1e-3
T = 0.02
cadence = 0.01
[initial]
kind = "gaussian"
modes = [[0], [1]]
widths = [1.0, 1.5]
amplitudes = [1.0, 0.5]
[symmetry]
lambdas = [2.0, 4.0]
"#;

fn rqnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rqnls"))
        .args(args)
        .env_remove("RQNLS_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = rqnls(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn every_subcommand_has_help() {
    for cmd in [
        &["simulate", "--help"][..],
        &["verify", "--help"],
        &["resonances", "--help"],
        &["bench-nonlinearity", "--help"],
        &["experiment", "approx", "--help"],
        &["experiment", "scatter", "--help"],
    ] {
        let o = rqnls(cmd);
        assert_eq!(o.status.code(), Some(0), "{cmd:?}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
    assert_eq!(rqnls(&["experiment"]).status.code(), Some(2));
    assert_eq!(rqnls(&["simulate"]).status.code(), Some(2));
}

#[test]
fn fast_suite_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = rqnls(&["verify", "--suite", "fast", "--seed", "3", "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["seed"], 3);
    assert_eq!(json["suite"], "fast");
    assert_eq!(json["reports"].as_array().unwrap().len(), 24);
    assert_eq!(rqnls(&["verify", "--suite", "huge"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_the_full_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", RESONANT);
    let out = dir.path().join("out");
    let o = rqnls(&["simulate", "--system", "resonant1d", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["config.toml", "metadata.json", "diagnostics.csv", "final.ckpt"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    assert_eq!(std::fs::read_to_string(out.join("config.toml")).unwrap(), RESONANT);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config_sha256"], sha256_hex(RESONANT.as_bytes()));
    assert_eq!(meta["tuple_order"], "lexicographic");
    assert_eq!(meta["method"], "direct");
    assert_eq!(meta["outcome"], "completed");
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11);
    let Snapshot::Resonant(state) = load_checkpoint(&out.join("final.ckpt")).unwrap() else {
        panic!("resonant checkpoint expected")
    };
    assert_eq!(state.step, 100);
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", RESONANT);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = rqnls(&["--threads", threads, "simulate", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push((
            std::fs::read(out.join("diagnostics.csv")).unwrap(),
            std::fs::read(out.join("final.ckpt")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = write_config(dir.path(), "full.toml", RESONANT);
    let half = write_config(dir.path(), "half.toml", &RESONANT.replace("T = 1.0", "T = 0.5"));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(rqnls(&["simulate", "--config", s(&full), "--out", s(&a)]).status.code(), Some(0));
    assert_eq!(rqnls(&["simulate", "--config", s(&half), "--out", s(&b)]).status.code(), Some(0));
    let ckpt = b.join("final.ckpt");
    let o = rqnls(&["simulate", "--config", s(&full), "--out", s(&c), "--resume", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(a.join("final.ckpt")).unwrap(), std::fs::read(c.join("final.ckpt")).unwrap());

    let other = write_config(dir.path(), "other.toml", &RESONANT.replace("L = 16.0", "L = 8.0"));
    let o = rqnls(&["simulate", "--config", s(&other), "--out", s(&c), "--resume", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("L = 16"));
}

#[test]
fn unstable_step_aborts_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = RESONANT.replace("dt = 0.01", "dt = 0.5").replace("T = 1.0", "T = 50.0").replace("cadence = 0.1", "cadence = 0.5")
        .replace("norm = 0.5", "norm = 20.0");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let out = dir.path().join("out");
    let o = rqnls(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let abort = out.join("abort.ckpt");
    assert!(String::from_utf8_lossy(&o.stdout).contains(s(&abort)));
    assert!(abort.exists() && !out.join("final.ckpt").exists());
    assert!(out.join("diagnostics.csv").exists());
    let meta = std::fs::read_to_string(out.join("metadata.json")).unwrap();
    assert!(meta.contains("non-finite"));
}

#[test]
fn config_errors_exit_2_and_name_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = RESONANT.replace("dt = 0.01", "dt = 0.0") + "colour = \"red\"\n[symmetry]\nlambda = 6.0\n";
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = rqnls(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["dt must be positive", "colour", "not a power of two"] {
        assert!(err.contains(needle), "{needle} missing in {err}");
    }
    let missing = dir.path().join("nope.toml");
    assert_eq!(rqnls(&["simulate", "--config", s(&missing), "--out", "x"]).status.code(), Some(2));
    let o = rqnls(&["simulate", "--system", "cylinder", "--config", s(&write_config(dir.path(), "ok.toml", RESONANT)), "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cylinder_simulation_and_approximation_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cyl.toml", CYLINDER);
    let out = dir.path().join("sim");
    let o = rqnls(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(csv.starts_with("t,step,mass,"));
    let mass: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(mass.iter().all(|m| (m - mass[0]).abs() < 1e-12 * mass[0]));
    assert!(matches!(load_checkpoint(&out.join("final.ckpt")).unwrap(), Snapshot::Cylinder { step: 20, .. }));

    let exp = dir.path().join("approx");
    let o = rqnls(&["experiment", "approx", "--config", s(&cfg), "--out", s(&exp), "--lambda", "2,4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(exp.join("approx.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    for name in ["config.toml", "metadata.json", "diagnostics.csv", "final.ckpt"] {
        assert!(exp.join(name).exists(), "{name} missing");
    }
    let o = rqnls(&["experiment", "approx", "--config", s(&cfg), "--out", s(&exp), "--lambda", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a power of two"));
}

#[test]
fn scatter_experiment_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = RESONANT.replace("T = 1.0", "T = 0.8").replace("norm = 0.5", "norm = 0.05");
    let cfg = write_config(dir.path(), "sc.toml", &text);
    let out = dir.path().join("sc");
    let o = rqnls(&["experiment", "scatter", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("scatter.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "t,cauchy_defect,l6_hbeta,tail_share");
    assert_eq!(rows.len(), 5);
    assert!(rows[4].ends_with(",0"));
}

#[test]
fn resonances_match_the_library() {
    let o = rqnls(&["resonances", "--dim", "2", "--j", "1,-1", "--cutoff", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let expected = rqnls_core::resonance::enumerate_resonances(
        rqnls_core::Dim::Two,
        rqnls_core::ModeIndex::d2(1, -1),
        2,
    )
    .unwrap();
    assert_eq!(text.lines().count(), 1 + expected.len());
    let o = rqnls(&["resonances", "--dim", "1", "--j", "-1", "--cutoff", "1", "--format", "json"]);
    let first = String::from_utf8(o.stdout).unwrap().lines().next().unwrap().to_string();
    assert_eq!(first, "[-1,-1,-1,-1,-1]");
    assert_eq!(rqnls(&["resonances", "--dim", "2", "--j", "1", "--cutoff", "1"]).status.code(), Some(2));
    assert_eq!(rqnls(&["resonances", "--dim", "1", "--j", "4", "--cutoff", "1"]).status.code(), Some(2));
}

#[test]
fn bench_emits_one_row_per_cutoff() {
    let o = rqnls(&["bench-nonlinearity", "--J", "1,2", "--Nx", "64", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "J,t_direct,t_fft,crossover");
    assert_eq!(rows.len(), 3);
}

#[test]
fn minimal_config_is_accepted() {
    let text = "system = \"resonant1d\"\nJ = 2\nNx = 256\nL = 20.0\ndt = 1e-3\nT = 1.0\n";
    assert!(parse_config_str(text, "minimal").is_ok());
}
