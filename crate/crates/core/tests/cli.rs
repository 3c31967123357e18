//! End-to-end runs of the `tdbeam` binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tdbeam"))
}

const SMALL: &str = r#"
schema_version = 1
num_ers = 4
num_trials = 2
seed = 5
p_max_dbm_grid = [36.0, 42.0]
m_grid = [2, 3]
schemes = ["multibeam", "tdma", "isotropic", "time_division"]

[algorithm]
max_outer = 20
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn example1_succeeds() {
    let out = bin().arg("example1").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.9127"));
    assert!(text.contains("0.9833"));
}

#[test]
fn sweep_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |name: &str, threads: &str| {
        let out_dir = dir.path().join(name);
        let out = bin()
            .args(["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", threads])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(out_dir.join("raw.csv")).unwrap(), std::fs::read(out_dir.join("aggregate.csv")).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a, b);
    let raw = String::from_utf8(a.0).unwrap();
    // Header plus 2 powers x 2 antenna counts x 2 trials x 4 schemes.
    assert_eq!(raw.lines().count(), 1 + 32);
    let agg = String::from_utf8(a.1).unwrap();
    assert_eq!(agg.lines().count(), 1 + 16);
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("o");
    let out = bin()
        .args(["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .args(["--trials", "1", "--schemes", "multibeam,isotropic", "--seed", "9", "--timing"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = std::fs::read_to_string(out_dir.join("raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 2 * 2);
    assert!(!raw.contains("tdma"));
    // Timing fills the last column.
    assert!(raw.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn solve_prints_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = bin().args(["solve", "--config", cfg.to_str().unwrap(), "--p-max-dbm", "38"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("time_division"));
    assert!(text.contains("status=optimal"));
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema_version = 1\nnum_trials = 0\n");
    let out = bin().args(["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_trials"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["power_sweep.toml", "antenna_sweep.toml"] {
        let c = tdbeam::ScenarioConfig::load(&dir.join(name)).unwrap();
        assert_eq!(c.num_ers, 30, "{name}");
    }
    // The power sweep spells out the built-in defaults.
    let power = tdbeam::ScenarioConfig::load(&dir.join("power_sweep.toml")).unwrap();
    let d = tdbeam::ScenarioConfig::default();
    assert_eq!(power.settings().unwrap(), d.settings().unwrap());
    assert_eq!((power.p_max_dbm_grid, power.eh, power.channel), (d.p_max_dbm_grid, d.eh, d.channel));
}
