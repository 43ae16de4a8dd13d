//! The `unigroup` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn unigroup(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unigroup"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const SMALL_QHO: &str = "name = small\nexperiment = qho2d\nm = 1\nm_range = 0..2\nsteps = 20\n";

#[test]
fn run_writes_tables_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("qho.conf"), SMALL_QHO);
    let out = unigroup(&["run", "qho.conf", "--out", "res"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let res = dir.path().join("res");
    let orders = fs::read_to_string(res.join("orders.csv")).unwrap();
    assert_eq!(
        orders.lines().next(),
        Some("section,p,level,h,tau,h_tau,steps,measured,bound")
    );
    assert!(
        orders.lines().any(|l| l.starts_with("temporal,"))
            && orders.lines().any(|l| l.starts_with("composite,"))
    );
    let norm = fs::read_to_string(res.join("series_norm.csv")).unwrap();
    assert_eq!(norm.lines().count(), 22);
    assert!(fs::read_to_string(res.join("series_energy.csv"))
        .unwrap()
        .starts_with("n,energy,delta_energy\n"));
    assert!(fs::read_to_string(res.join("summary.txt"))
        .unwrap()
        .contains("result PASS"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("nls.conf"),
        "experiment = nls\nm = 1\nwindows = 3\n",
    );
    for out in ["a", "b"] {
        assert!(unigroup(&["run", "nls.conf", "--out", out], dir.path())
            .status
            .success());
    }
    for file in [
        "orders.csv",
        "series_windows.csv",
        "series_norm.csv",
        "summary.txt",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn overrides_replace_config_values() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("s.conf"), "experiment = qho2d\nm = 2\n");
    let out = unigroup(
        &[
            "run",
            "s.conf",
            "--experiment",
            "unitarity_soak",
            "--m",
            "1",
            "--p",
            "2",
            "--tau",
            "0.05",
            "--steps",
            "16",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let o = dir.path().join("o");
    assert!(o.join("series_norm_random_p2.csv").exists());
    assert!(!o.join("series_norm_random_p1.csv").exists());
    assert_eq!(
        fs::read_to_string(o.join("series_norm_random_p2.csv"))
            .unwrap()
            .lines()
            .count(),
        18
    );
}

#[test]
fn invalid_configs_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("bad.conf"),
        "experiment = nls\nm = 1\ntau = 5\n",
    );
    let out = unigroup(&["run", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a contraction"));
    assert!(!dir.path().join("out").exists());

    write(
        &dir.path().join("typo.conf"),
        "experiment = qho2d\nsetps = 3\n",
    );
    let out = unigroup(&["run", "typo.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo.conf:2"));
}

#[test]
fn suite_merges_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = unigroup(&["suite", "empty"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 experiments, 0 failed"));

    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    write(&suite.join("a.conf"), SMALL_QHO);
    write(
        &suite.join("b.conf"),
        "name = soak\nexperiment = unitarity_soak\ndim = 1\nm = 2\nsteps = 50\n",
    );
    write(&suite.join("notes.txt"), "ignored");
    let out = Command::new(env!("CARGO_BIN_EXE_unigroup"))
        .args(["suite", "suite", "--out", "runs"])
        .env("UNIGROUP_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("2 experiments, 0 failed"));
    assert!(
        dir.path().join("runs/small/summary.txt").exists()
            && dir.path().join("runs/soak/orders.csv").exists()
    );

    write(
        &suite.join("c.conf"),
        "name = soak\nexperiment = constants_of_motion\n",
    );
    let out = unigroup(&["suite", "suite"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate experiment name"));
}

#[test]
fn failing_experiment_gives_nonzero_exit_and_keeps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    write(
        &suite.join("ok.conf"),
        "name = ok\nexperiment = spatial_order_sweep\ndim = 1\nm_range = 1..4\n",
    );
    // far too few Picard iterations to reach the tolerance
    write(
        &suite.join("nls.conf"),
        "name = nls\nexperiment = nls\nm = 1\nmax_iter = 1\nwindows = 2\n",
    );
    let out = unigroup(&["suite", "suite", "--out", "runs"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("window 0"), "{stdout}");
    assert!(stdout.contains("1 failed"));
    assert!(dir.path().join("runs/ok/orders.csv").exists());
}
