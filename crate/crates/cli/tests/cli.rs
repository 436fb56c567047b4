use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timecrisis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.split_whitespace().next()?.parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn simulate_constant_controls() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&["simulate", "--problem", "linear_payoff_1d", "--control", "1.0", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    assert!((field(&stdout(&o), "crisis_cost") + 1.0).abs() < 1e-8);
    let o = run(&["simulate", "--problem", "linear_payoff_1d", "--control", "-1.0", "--out", &out]);
    assert!((field(&stdout(&o), "crisis_cost") - 6.0).abs() < 1e-8);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("# domain=physical\n# generated="));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(run(&["simulate", "--problem", "linear_payoff_1d", "--out", &out]).status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--problem", "nope", "--out", &out]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--problem", "linear_payoff_1d", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        run(&["simulate", "--problem", "linear_payoff_1d", "--control", "missing.csv", "--out", &out]).status.code(),
        Some(2)
    );
}

#[test]
fn control_from_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    std::fs::write(&path, "t_start,t_end,u_1\n0,1,0.5\n1,2,1\n").unwrap();
    let o = run(&[
        "simulate",
        "--problem",
        "linear_payoff_1d",
        "--control",
        path.to_str().unwrap(),
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    // x: -1 -> -0.5 -> 0.5, outside K after t = 1.5
    assert!((field(&stdout(&o), "crisis_cost") + 0.5).abs() < 1e-8);
    std::fs::write(&path, "0,1,1\n1,2,-1\n").unwrap();
    let o = run(&[
        "simulate",
        "--problem",
        "linear_payoff_1d",
        "--control",
        path.to_str().unwrap(),
        "--out",
        &out_arg(dir.path()),
    ]);
    // touches the boundary at t = 1 without crossing
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn solve_and_report_linear_payoff() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&["solve", "--problem", "linear_payoff_1d", "--out", &out, "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("solution.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((json["objective"].as_f64().unwrap() + 1.0).abs() < 1e-3);

    let o = run(&["report", "--problem", "linear_payoff_1d", "--out", &out, "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let gamma = field(&report, "  gamma_1 =");
    assert!((gamma + 1.0).abs() < 1e-4, "{report}");
    assert!(report.contains("overall: PASS"));
    for f in ["certificate.json", "costate.csv", "verification.json", "iterations.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn failed_verification_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--problem", "double_crossing_1d", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL hamiltonian_arc"));
}

const LINEAR_TOML: &str = r#"
name = "linear_from_toml"
n = 1
m = 1
horizon = 2.0
x0 = [-1.0]
f = [[{ coef = 1.0, u = [1] }]]
g = [{ coef = 1.0, x = [1] }]
phi = [{ coef = -2.0, x = [1] }]
c = [[{ coef = 1.0, u = [1] }, { coef = -1.0 }],
     [{ coef = -1.0, u = [1] }, { coef = -1.0 }]]

[box_hull]
lower = [-1.0]
upper = [1.0]
"#;

#[test]
fn nonconvergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    std::fs::write(&cfg, format!("{LINEAR_TOML}\n[solver]\nn_arc = 20\nmax_outer = 1\nmax_inner = 2\n")).unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(dir.path().join("solution.json").exists());
    assert!(dir.path().join("iterations.csv").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&[
            "report",
            "--problem",
            "quad_payoff_1d",
            "--seed",
            "3",
            "--n-arc",
            "100",
            "--no-timestamp",
            "--out",
            &out_arg(d.path()),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        assert_eq!(
            std::fs::read(a.path().join(&n)).unwrap(),
            std::fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn config_file_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    std::fs::write(&cfg, format!("{LINEAR_TOML}\n[solver]\nn_arc = 50\n")).unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((field(&stdout(&o), "objective") + 1.0).abs() < 1e-3);
    let o = run(&["solve", "--config", "/nonexistent.toml", "--out", &out_arg(dir.path())]);
    assert_ne!(o.status.code(), Some(0));
}
