use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BURGERS: &str = r#"
[problem]
equation = "burgers"
dim = 1
n = 32
nu = 0.1
initial = { kind = "sine" }

[time]
dt = 1e-2
t_end = 0.05

[ensemble]
realizations = 16
seed = 3

[output]
snapshot_interval = 2
"#;

fn slns(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slns"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SLNS_WORKERS")
        .output()
        .expect("spawn slns")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn missing_config_exits_1_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = slns(&["run", "no/such/file.cfg"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/file.cfg"));
}

#[test]
fn bad_arguments_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&slns(&["run"], tmp.path())), 1);
    assert_eq!(code(&slns(&["--help"], tmp.path())), 0);
}

#[test]
fn run_writes_artifacts_under_out_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(tmp.path(), "burgers1d.cfg", BURGERS);
    let o = slns(&["run", "burgers1d.cfg"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("out/burgers1d");
    for f in [
        "diag.csv",
        "config.toml",
        "manifest.txt",
        "u_00000.slnsf",
        "u_00004.slnsf",
        "u_00005.slnsf",
    ] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let diag = fs::read_to_string(dir.join("diag.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 5);
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest
        .lines()
        .any(|l| l.ends_with("  diag.csv") && l.len() == 64 + 2 + 8));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("energy=") && stdout.contains("max_div=") && stdout.contains("wall="));
}

#[test]
fn seed_override_is_deterministic_and_changes_the_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "b.cfg", BURGERS);
    let cfg = cfg.to_str().unwrap();
    for (out, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let o = slns(
            &["run", cfg, "--seed", seed, "--out", out, "--workers", "2"],
            tmp.path(),
        );
        assert_eq!(code(&o), 0);
    }
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "diag.csv"), read("b", "diag.csv"));
    assert_eq!(read("a", "u_00005.slnsf"), read("b", "u_00005.slnsf"));
    assert_ne!(read("a", "u_00005.slnsf"), read("c", "u_00005.slnsf"));
}

#[test]
fn effective_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(tmp.path(), "b.cfg", BURGERS);
    assert_eq!(code(&slns(&["run", "b.cfg", "--out", "first"], tmp.path())), 0);
    // the effective config names its own run directory; redirect it
    let o = slns(&["run", "first/config.toml", "--out", "second"], tmp.path());
    assert_eq!(code(&o), 0);
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("first", "diag.csv"), read("second", "diag.csv"));
    assert_eq!(read("first", "u_00005.slnsf"), read("second", "u_00005.slnsf"));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(tmp.path(), "b.cfg", BURGERS);
    assert_eq!(
        code(&slns(&["run", "b.cfg", "--out", "w1", "--workers", "1"], tmp.path())),
        0
    );
    let o = Command::new(env!("CARGO_BIN_EXE_slns"))
        .args(["run", "b.cfg", "--out", "w3"])
        .current_dir(tmp.path())
        .env("SLNS_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let read = |d: &str| fs::read(tmp.path().join(d).join("diag.csv")).unwrap();
    assert_eq!(read("w1"), read("w3"));
}

#[test]
fn compare_against_itself_is_zero_and_gates_fail_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(tmp.path(), "b.cfg", BURGERS);
    assert_eq!(code(&slns(&["run", "b.cfg", "--out", "r"], tmp.path())), 0);
    let o = slns(&["compare", "r", "--oracle", "r"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("r/compare_run.csv")).unwrap();
    for row in table.lines().skip(1) {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[2], 0.0);
        assert_eq!(cols[3], 0.0);
    }

    let strict = format!("{BURGERS}\n[tolerance]\nl2 = 1e-12\n");
    write_cfg(tmp.path(), "strict.cfg", &strict);
    assert_eq!(code(&slns(&["run", "strict.cfg", "--out", "s"], tmp.path())), 0);
    let o = slns(&["compare", "s", "--oracle", "cole_hopf"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("l2"));
}

#[test]
fn cfl_violation_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BURGERS
        .replace("dt = 1e-2", "dt = 0.5")
        .replace("t_end = 0.05", "t_end = 1.0");
    write_cfg(tmp.path(), "fast.cfg", &text);
    let o = slns(&["run", "fast.cfg", "--out", "x"], tmp.path());
    assert_eq!(code(&o), 2);
    // partial outputs are flushed
    assert!(tmp.path().join("x/diag.csv").is_file());
    assert!(tmp.path().join("x/manifest.txt").is_file());
}

#[test]
fn convergence_needs_three_levels_and_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(tmp.path(), "b.cfg", BURGERS);
    let o = slns(&["convergence", "b.cfg", "--axis", "dt", "--levels", "2"], tmp.path());
    assert_eq!(code(&o), 1);
    let o = slns(
        &["convergence", "b.cfg", "--axis", "m", "--levels", "3", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("c/convergence_m.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("level,param,error,order"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn info_describes_configs_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(tmp.path(), "b.cfg", BURGERS);
    let o = slns(&["info", "b.cfg"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("steps=5"));
    assert_eq!(code(&slns(&["run", "b.cfg", "--out", "r"], tmp.path())), 0);
    let o = slns(&["info", "r/u_00000.slnsf"], tmp.path());
    assert!(String::from_utf8_lossy(&o.stdout).contains("snapshot dim=1 n=32"));
}
