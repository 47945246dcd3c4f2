use std::path::Path;
use std::process::{Command, Output};

use lmg_squeeze::config::ExperimentConfig;
use lmg_squeeze::harness::{read_csv, run_single, simulate};

const SMALL: &str = r#"
[system]
n = 6
a = 1.0
b = -1.0

[bath]
damping = 0.01
cutoff = 2.0
kt = 10.0

[run]
mode = "master"
t_max = 0.2
dt = 0.001
sample_stride = 10
"#;

fn bin(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lmg-squeeze"));
    cmd.args(args).current_dir(dir).env("RUST_LOG", "error");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_str_with_path(SMALL, Path::new("small.toml")).unwrap();
    let (path, output) = run_single(&config, dir.path()).unwrap();
    let table = read_csv(&path).unwrap();
    assert_eq!(table.columns, output.columns);
    assert_eq!(table.rows.len(), output.rows.len());
    for (a, b) in table.rows.iter().zip(&output.rows) {
        for (x, y) in a.iter().zip(b) {
            assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
        }
    }
    assert!(table.header.iter().any(|l| l.starts_with("# trusted_window")));
}

#[test]
fn header_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let name = write(dir.path(), "small.toml", SMALL);
    let out = bin(&["run", "--config", &name, "--out", "first"], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = dir.path().join("first/master.csv");
    let echoed = read_csv(&first).unwrap().config().unwrap().unwrap();
    assert_eq!(echoed.resolve().unwrap(), echoed.pinned().unwrap().resolve().unwrap());
    write(dir.path(), "echo.toml", &echoed.to_toml());
    let out = bin(&["run", "--config", "echo.toml", "--out", "second"], dir.path(), &[]);
    assert!(out.status.success());
    let a = std::fs::read(first).unwrap();
    let b = std::fs::read(dir.path().join("second/master.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_runs_are_reproducible_from_seed() {
    let mut c = ExperimentConfig::from_str_with_path(SMALL, Path::new("small.toml")).unwrap();
    c.system.n = 2;
    c.run.mode = lmg_squeeze::config::Mode::Oracle;
    c.run.realizations = Some(200);
    c.run.seed = 99;
    let a = simulate(&c.resolve().unwrap()).unwrap();
    let b = simulate(&c.resolve().unwrap()).unwrap();
    assert_eq!(a, b);
    c.run.seed = 100;
    assert_ne!(a.rows, simulate(&c.resolve().unwrap()).unwrap().rows);
}

#[test]
fn invalid_config_exits_1_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let name = write(dir.path(), "bad.toml", &SMALL.replace("cutoff = 2.0", "cutoff = 0.0"));
    let out = bin(&["run", "--config", &name], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutoff"));

    let name = write(dir.path(), "typo.toml", &SMALL.replace("kt =", "kT_typo ="));
    let out = bin(&["run", "--config", &name], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kT_typo"));
}

#[test]
fn divergence_exits_2_with_time() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("cutoff = 2.0", "cutoff = 0.1")
        .replace("mode = \"master\"", "mode = \"coefficients\"")
        .replace("t_max = 0.2", "t_max = 60.0")
        .replace("dt = 0.001", "dt = 0.02");
    let name = write(dir.path(), "long.toml", &text);
    let out = bin(&["run", "--config", &name], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence at t ="));
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let name = write(dir.path(), "small.toml", SMALL);
    let out = bin(
        &["run", "--config", &name, "--seed", "5"],
        dir.path(),
        &[("LMG_N", "3")],
    );
    assert!(out.status.success());
    let table = read_csv(&dir.path().join("master.csv")).unwrap();
    let config = table.config().unwrap().unwrap();
    assert_eq!(config.system.n, 3);
    assert_eq!(config.run.seed, 5);
    let out = bin(&["run", "--config", &name], dir.path(), &[("LMG_NOT_A_KEY", "1")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_exit_codes_follow_failures() {
    let dir = tempfile::tempdir().unwrap();
    let partial = format!("{SMALL}\n[sweep]\nparams = [{{ name = \"cutoff\", values = [2.0, -1.0] }}]\n");
    let name = write(dir.path(), "partial.toml", &partial);
    let out = bin(&["sweep", "--config", &name, "--threads", "2"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let summary = read_summary(&dir.path().join("partial_summary.csv"));
    assert!(summary.contains(",ok,") && summary.contains(",failed,"));
    let long = read_csv(&dir.path().join("partial_long.csv")).unwrap();
    assert_eq!(long.rows.len(), 21);

    let all = format!("{SMALL}\n[sweep]\nparams = [{{ name = \"cutoff\", values = [-2.0, -1.0] }}]\n");
    let name = write(dir.path(), "all.toml", &all);
    let out = bin(&["sweep", "--config", &name], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
}

fn read_summary(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn plots_and_selfcheck() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["plots", "--out", "."], dir.path(), &[]);
    assert!(out.status.success());
    for name in [
        "fig1.py",
        "fig2a.py",
        "fig4b.py",
        "plot_common.py",
        "fig1.toml",
        "fig4b.toml",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let fig1 = ExperimentConfig::load(&dir.path().join("fig1.toml")).unwrap();
    assert!(fig1.resolve().is_ok());

    let out = bin(&["selfcheck"], dir.path(), &[]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}
