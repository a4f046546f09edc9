use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "d = 30\nt = 6\ntarget_active = 6.0\nratios = [0.5]\ncoherence = [0.3]\nrepetitions = 2\n";

fn stss(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stss"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn synth_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = stss(&["synth", "--config", &cfg, "--out", "p", "--seed", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("p/problem.txt").exists());

    let out = stss(&["solve", "p/problem.txt", "--config", &cfg, "--out", "s", "--threads", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("nmse"), "{stdout}");

    let post = std::fs::read_to_string(dir.path().join("s/posterior.csv")).unwrap();
    let mut lines = post.lines();
    assert_eq!(lines.next(), Some("i,t,x_mean,x_var,support_prob,gamma_mean,gamma_var"));
    assert_eq!(lines.count(), 30 * 6);
    let diag = std::fs::read_to_string(dir.path().join("s/diagnostics.csv")).unwrap();
    assert!(diag.starts_with("iteration,"));
}

#[test]
fn experiments_write_rows_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    for exp in ["exp1", "exp2"] {
        let out = stss(&[exp, "--config", &cfg, "--out", "o"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = std::fs::read_to_string(dir.path().join(format!("o/{exp}.csv"))).unwrap();
        // 4 methods × 1 sweep value × 2 repetitions.
        assert_eq!(rows.lines().count(), 1 + 8, "{rows}");
        let summary = std::fs::read_to_string(dir.path().join(format!("o/{exp}_summary.csv"))).unwrap();
        assert_eq!(summary.lines().count(), 1 + 4, "{summary}");
    }
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let read = |seed: &str, sub: &str| {
        let out = stss(&["exp1", "--config", &cfg, "--out", sub, "--seed", seed], dir.path());
        assert!(out.status.success());
        std::fs::read(dir.path().join(sub).join("exp1.csv")).unwrap()
    };
    assert_ne!(read("1", "a"), read("2", "b"));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "alpha = 3.0\n").unwrap();
    let out = stss(&["exp1", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = stss(&["exp1", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = stss(&["synth", "--ratio", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = stss(&["selftest"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 7, "{stdout}");
    assert!(lines.iter().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    // Exit status follows the checks.
    assert_eq!(out.status.success(), lines.iter().all(|l| l.starts_with("PASS ")));
}
