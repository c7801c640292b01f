use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinn-observer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const PROBLEM: &str = r#"
[system]
phi = [
  "exp(0.2*x2/(1+x2))*sqrt(1+x1+x2)-1-0.4*x2-0.5*ln(1+x1+x2)",
  "0.5*ln(1+x1+x2)+0.4*x2",
]
h = "x2"

[observer]
a = [[0.5, 0.3], [0.5, 0.4]]
b = ["0.2*y/(1+y)-0.3*y", "0"]

[domain]
lower = -0.495

[transform]
t = ["ln(1+x1+x2)", "x2"]
positive = ["1+x1+x2"]
"#;

#[test]
fn check_benchmarks() {
    let o = run(&["check", "--benchmark", "bench1"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("0.1298") && s.contains("0.7702") && s.contains("0.8405"), "{s}");
    assert!(!s.contains("FAIL"));
    let o = run(&["check", "--benchmark", "bench2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("WARNING"));
}

#[test]
fn check_problem_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, PROBLEM).unwrap();
    assert_eq!(code(&run(&["check", "--problem", path(&good)])), 0);

    let unstable = dir.path().join("unstable.toml");
    fs::write(&unstable, PROBLEM.replace("[[0.5, 0.3], [0.5, 0.4]]", "[[1.5, 0.3], [0.5, 0.4]]")).unwrap();
    assert_eq!(code(&run(&["check", "--problem", path(&unstable)])), 2);

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, PROBLEM.replace("h = \"x2\"", "h = \"x2 +\"")).unwrap();
    let o = run(&["check", "--problem", path(&broken)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.h"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["solve", "--benchmark", "bench1", "--solver", "newton"])), 1);
    assert_eq!(code(&run(&["check"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn series_solve_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["solve", "--benchmark", "bench1", "--solver", "series", "--order", "6", "--out", path(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("54 coefficients"));
    }
    for f in ["map.json", "verify.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let map: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("map.json")).unwrap()).unwrap();
    assert_eq!(map["kind"], "series");

    let ev = dir.path().join("eval");
    let o = run(&["eval", "--benchmark", "bench1", "--map", path(&a.join("map.json")), "--out", path(&ev)]);
    assert_eq!(code(&o), 0);
    let norms: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("norms.json")).unwrap()).unwrap();
    for grid in ["train", "test"] {
        for k in ["l1", "l2", "linf"] {
            assert!(norms[grid]["components"][1][k].as_f64().unwrap() <= 1e-10);
        }
    }
    let t1 = norms["test"]["components"][0]["linf"].as_f64().unwrap();
    assert!((1.0..=6.0).contains(&t1), "{t1}");
    let csv = fs::read_to_string(ev.join("fields_test.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,e1,e2\n"));
    assert_eq!(csv.lines().count(), 401);

    // Mismatched dimension.
    let map3 = dir.path().join("map3.json");
    fs::write(&map3, r#"{"kind": "expr", "components": ["x1", "x2", "x3"]}"#).unwrap();
    assert_eq!(code(&run(&["eval", "--benchmark", "bench1", "--map", path(&map3), "--out", path(&ev)])), 1);
}

#[test]
fn oracle_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("t.json");
    fs::write(&map, r#"{"kind": "expr", "components": ["x1/(1+x1)+0.9*x2", "2.5*(x1/(1+x1)+x2)"]}"#).unwrap();
    let o = run(&["eval", "--benchmark", "bench2", "--map", path(&map), "--out", path(dir.path())]);
    assert_eq!(code(&o), 0);
    let norms: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("norms.json")).unwrap()).unwrap();
    for grid in ["train", "test"] {
        for j in 0..2 {
            assert_eq!(norms[grid]["components"][j]["linf"].as_f64().unwrap(), 0.0);
        }
    }
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_with_closed_form_map() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--benchmark", "bench1", "--horizon", "41", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let ex = column(&csv, "ex_inf");
    assert_eq!(ex.len(), 41);
    assert!(ex[40] < 1e-3, "{}", ex[40]);

    let o = run(&["simulate", "--benchmark", "bench1", "--z0-exact", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(column(&csv, "ex_inf").iter().all(|&e| e <= 1e-8));

    let o = run(&["simulate", "--benchmark", "bench1", "--horizon", "0", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("trajectory.csv")).unwrap().lines().count(), 1);
}

#[test]
fn simulate_domain_and_newton_failures() {
    let dir = tempfile::tempdir().unwrap();
    let outside = ["simulate", "--benchmark", "bench1", "--x0", "-0.495,0.35", "--out", path(dir.path())];
    assert_eq!(code(&run(&outside)), 1);
    let mut allowed = outside.to_vec();
    allowed.push("--allow-outside-domain");
    assert_eq!(code(&run(&allowed)), 0);

    let flat = dir.path().join("flat.json");
    fs::write(&flat, r#"{"kind": "expr", "components": ["0*x1", "0*x2"]}"#).unwrap();
    let o = run(&["simulate", "--benchmark", "bench1", "--map", path(&flat), "--out", path(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 0"));
}

#[test]
fn pinn_solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "solve", "--benchmark", "bench1", "--solver", "pinn-greedy", "--seed", "7", "--max-fevals", "200", "--out",
            path(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["map.json", "verify.json", "training_log.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let log = fs::read_to_string(a.join("training_log.txt")).unwrap();
    assert_eq!(log.lines().count(), 18);
    let map: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("map.json")).unwrap()).unwrap();
    assert_eq!(map["kind"], "pinn");
    assert_eq!(map["provenance"]["seed"], 7);

    let o = run(&["solve", "--benchmark", "bench1", "--solver", "pinn-single", "--out", path(&a)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn uq_campaigns() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["uq", "--benchmark", "bench1", "--seed", "3", "--max-fevals", "100", "--out", path(dir.path())];
    let mut one = base.to_vec();
    one.extend(["--runs", "1"]);
    assert_eq!(code(&run(&one)), 1);

    let mut same = base.to_vec();
    same.extend(["--runs", "2", "--same-seed", "--workers", "2", "--solver", "pinn-single"]);
    let o = run(&same);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let tail = |r: &str| r.splitn(3, ',').nth(2).unwrap().to_string();
    assert_eq!(tail(rows[0]), tail(rows[1]));
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["failures"], 0);
    for j in 0..2 {
        let linf = &stats["components"][j]["linf"];
        assert_eq!(linf["p05"], linf["p95"]);
    }
}
