use std::path::Path;
use std::process::{Command, Output};

fn fracid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracid"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("s = 0.5\nbogus_key = 1\n", "bogus_key"),
        ("levels = [3]\n", "`s`"),
        ("s = 1.0\n", "s = 1"),
    ];
    for (k, (text, needle)) in cases.iter().enumerate() {
        let config = write(dir.path(), &format!("c{k}.toml"), text);
        let out = fracid(&["forward-rate", "--config", &config], dir.path());
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(needle), "{}", stderr(&out));
    }
    let out = fracid(&["identify", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.toml"));
    let out = fracid(&["no-such-study"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "cg.toml",
        "s = 0.5\nlevels = [3]\nreference_level = 5\n[solver]\nkind = \"conjugate-gradient\"\ntolerance = 1e-12\nmax_iterations = 1\n",
    );
    let out = fracid(&["forward-rate", "--config", &config, "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn grad_check_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "g.toml", "s = 0.4\ncells = 8\ndirections = 4\nsteps = [1e-3, 1e-5]\n");
    let out = fracid(&["grad-check", "--config", &config, "--out", "gc", "--seed", "3"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("gc/grad_check.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("direction_id,step,fd_value,adjoint_value,rel_error"));
    assert_eq!(lines.count(), 8);
    let echo = std::fs::read_to_string(dir.path().join("gc/config.toml")).unwrap();
    assert!(echo.contains("seed = 3"));
    for name in ["taylor.csv", "hessian.csv", "metadata.toml", "grad_check.gp"] {
        assert!(dir.path().join("gc").join(name).exists(), "{name}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "t.toml",
        "s = [0.3, 0.6]\ncells = 8\nshifts = [0.0, 5.0]\nheights = [1, 2, 3]\nreference_height = 8\n",
    );
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let run = fracid(&["truncation", "--config", &config, "--out", out, "--threads", threads], dir.path());
        assert!(run.status.success(), "{}", stderr(&run));
    }
    for name in ["truncation.csv", "truncation_fit.csv", "metadata.toml"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn ymesh_file_and_state_dump() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "y.txt", "3 3 0.5 1\n0 0.75 1.5 3\n1 2 3\n");
    let config = write(dir.path(), "f.toml", "s = 0.5\nlevels = [3, 4]\nreference_level = 6\n");
    let out = fracid(
        &["forward-rate", "--config", &config, "--ymesh-file", "y.txt", "--dump-state", "state.bin", "--out", "fr"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("fr/forward_rate.csv")).unwrap();
    // Every row uses the file's Y = 3 and M = 3.
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("3e0") && l.split(',').nth(4) == Some("3")));
    let state = std::fs::read(dir.path().join("state.bin")).unwrap();
    // 15 interior nodes times 6 y-dofs, after the header.
    assert!(state.len() > 90 * 8);
    let bad = fracid(&["forward-rate", "--config", &config, "--ymesh-file", "absent.txt"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn frozen_regularization_is_not_schedule_valid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "s.toml",
        "s = 0.5\nlevels = [1, 2]\nreference_level = 7\n[schedule]\nrho_exponent = 0.0\nrho_scale = 0.05\n",
    );
    let out = fracid(&["schedule-study", "--config", &config, "--out", "ss"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let meta = std::fs::read_to_string(dir.path().join("ss/metadata.toml")).unwrap();
    assert!(meta.contains("schedule_valid = false"), "{meta}");
    assert!(meta.contains("schedule_violation"));
    let csv = std::fs::read_to_string(dir.path().join("ss/schedule_study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn identify_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "i.toml", "s = 0.5\nlevels = [1]\nreference_level = 7\n");
    let out = fracid(&["identify", "--config", &config, "--out", "run", "--dump-state", "v.bin"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("run");
    let q = std::fs::read_to_string(run.join("q_recovered.csv")).unwrap();
    assert!(q.starts_with("cell_left,cell_right,value\n"));
    assert_eq!(q.lines().count(), 17);
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("iter,value,misfit,penalty,pg_norm\n"));
    let diagnostics = std::fs::read_to_string(run.join("diagnostics.csv")).unwrap();
    assert!(diagnostics.lines().next().unwrap().contains("fixed_point_residual,vi_residual,ritz_value,e_sup,p_sup"));
    assert!(std::fs::read_to_string(run.join("config.toml")).unwrap().contains("kind = \"identify\""));
    assert!(dir.path().join("v.bin").exists());
}
