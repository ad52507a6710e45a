use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn slag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slag"))
        .args(args)
        .output()
        .expect("run slag")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses a `t,x,u` CSV into rows.
fn read_rows(p: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn small_dsl(g: &str) -> Value {
    json!({
        "n": 1,
        "phase": "3*pi/4",
        "grid": { "nx": 41, "nt": 21, "ntau": 101 },
        "boundary": { "g": g }
    })
}

#[test]
fn angle_on_degenerate_locus() {
    let dir = TempDir::new().unwrap();
    let m = write_json(dir.path(), "m.json", &json!({ "dim": 2, "rows": [[0, 0], [0, 1]] }));
    let o = slag(&["angle", "--matrix", s(&m), "--spacetime"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("2.356194490192345"), "{out}");
    assert!(out.contains("\"on_degenerate_locus\": true"), "{out}");
}

#[test]
fn angle_methods_agree_off_locus() {
    let dir = TempDir::new().unwrap();
    let m = write_json(dir.path(), "m.json", &json!({ "dim": 2, "rows": [[0.5, 0.3], [0.3, -1.2]] }));
    let angle = |method: &str| -> f64 {
        let o = slag(&["angle", "--matrix", s(&m), "--spacetime", "--method", method]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["angle"].as_f64().unwrap()
    };
    let block = angle("block");
    assert!((block - angle("direct")).abs() < 1e-12);
    assert!((block - angle("limit")).abs() < 2e-2);
}

#[test]
fn check_identity_is_inside() {
    let dir = TempDir::new().unwrap();
    let m = write_json(dir.path(), "id2.json", &json!({ "dim": 2, "rows": [[1, 0], [0, 1]] }));
    let o = slag(&["check", "--phase", "0.7853981633974483", "--matrix", s(&m)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), r#"{"status":"inside","margin":0.7853981633974483}"#);
}

#[test]
fn check_sampled_member_is_reproducible() {
    let run = || {
        let o = slag(&["check", "--phase", "pi+0.3", "--sample", "--n", "2", "--spacetime", "--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let a = run();
    assert_eq!(a, run());
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_ne!(v["status"], "outside");
    assert_eq!(v["seed"], 7);
}

#[test]
fn validation_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let m = write_json(dir.path(), "m.json", &json!({ "dim": 1, "rows": [[1]] }));
    let o = slag(&["check", "--phase", "1 +", "--matrix", s(&m)]);
    assert_eq!(o.status.code(), Some(2));

    let o = slag(&["angle", "--matrix", s(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));

    // Phase outside the range for n = 1.
    let cfg = write_json(dir.path(), "c.json", &json!({ "n": 1, "phase": 3.5, "boundary": { "g": "x^2/2" } }));
    let o = slag(&["dsl-solve", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "c.json", &json!({ "n": 1, "phase": 2.0, "grid": { "nx": "many" } }));
    let o = slag(&["dsl-solve", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.nx"), "{}", stderr(&o));

    let cfg = write_json(dir.path(), "d.json", &json!({ "n": 1, "phase": 2.0, "grid": { "nz": 5 } }));
    let o = slag(&["dsl-solve", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nz"), "{}", stderr(&o));

    let cfg = write_json(dir.path(), "e.json", &json!({ "n": 1, "phase": 2.0, "grid": { "nx": 2 } }));
    let o = slag(&["dsl-solve", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nx"), "{}", stderr(&o));
}

#[test]
fn convergence_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "c.json",
        &json!({
            "n": 2,
            "phase": "pi/2",
            "grid": { "nx": 33 },
            "boundary": { "obstacle": "(x^2+y^2)/2 - 0.3*cos(3*x)" },
            "tolerances": { "maxSweeps": 2 }
        }),
    );
    let o = slag(&["envelope", "--config", s(&cfg), "--out", s(&dir.path().join("u.csv"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn t_constant_data_gives_constant_slices() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_dsl("x^2/2"));
    let out = dir.path().join("u.csv");
    let o = slag(&["dsl-solve", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&out);
    let nx = 41;
    assert_eq!(rows.len(), 21 * nx);
    // Rows run over x within each time level.
    for (i, row) in rows.iter().enumerate() {
        let first = &rows[i % nx];
        assert_eq!(row[1], first[1]);
        assert!((row[2] - first[2]).abs() <= 1e-6);
        assert!((row[2] - row[1] * row[1] / 2.0).abs() <= 1e-6);
    }
}

#[test]
fn dsl_solve_then_verify_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_dsl("0.5*x^2 + 0.05*(t + 0.03*x + 0.5)^2"));
    let out = dir.path().join("u.csv");
    let report = dir.path().join("r.json");
    let o = slag(&["dsl-solve", "--config", s(&cfg), "--out", s(&out), "--report", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["pass"], true, "{r:#}");

    let o = slag(&["verify", "--solution", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["diagnostics"]["boundaryMatch"]["pass"].as_bool().unwrap());

    let o = slag(&["verify", "--solution", s(&out), "--phase", "3*pi/4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn verify_rejects_a_non_solution() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("u.csv");
    let mut text = String::from("t,x,u\n");
    for i in 0..11 {
        for j in 0..11 {
            let (t, x) = (i as f64 / 10.0, -1.0 + j as f64 / 5.0);
            // Concave in t.
            text.push_str(&format!("{t},{x},{}\n", x * x / 2.0 - 3.0 * t * t));
        }
    }
    std::fs::write(&bad, text).unwrap();
    let o = slag(&["verify", "--solution", s(&bad), "--phase", "3*pi/4"]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn echoed_config_reruns_bit_identically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_dsl("0.5*x^2 + 0.05*exp(t + 0.03*x) + 0.2*x"));
    let first = dir.path().join("u1.csv");
    let report = dir.path().join("r.json");
    let o = slag(&["dsl-solve", "--config", s(&cfg), "--out", s(&first), "--report", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let mut echo = r["config"].clone();
    assert_eq!(echo["grid"]["nt"], 21);
    assert!(echo["domain"]["x"].is_array());
    let second = dir.path().join("u2.csv");
    echo["output"] = json!({ "solution": s(&second) });
    let echo_path = write_json(dir.path(), "echo.json", &echo);
    let o = slag(&["dsl-solve", "--config", s(&echo_path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "c.json", &small_dsl("0.5*x^2 + 0.05*exp(t + 0.03*x) + 0.2*x"));
    let run = |threads: &str| {
        let o = slag(&["--threads", threads, "dsl-solve", "--config", s(&cfg)]);
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn dirichlet_reproduces_quadratic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "c.json",
        &json!({ "n": 2, "phase": "pi/2", "grid": { "nx": 17 }, "boundary": { "trace": "(x^2+y^2)/2" } }),
    );
    let out = dir.path().join("u.csv");
    let o = slag(&["dirichlet", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["residual"].as_f64().unwrap() < 1e-6);
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 17 * 17);
    for r in rows {
        assert!((r[2] - (r[0] * r[0] + r[1] * r[1]) / 2.0).abs() < 1e-6);
    }
}

#[test]
fn envelope_stays_below_obstacle() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "c.json",
        &json!({ "n": 1, "phase": 0.5, "grid": { "nx": 101 }, "boundary": { "obstacle": "abs(x) + 0.2*sin(5*x)" } }),
    );
    let o = slag(&["envelope", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,value"));
    let mut count = 0;
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[1] <= v[0].abs() + 0.2 * (5.0 * v[0]).sin() + 1e-12);
        count += 1;
    }
    assert_eq!(count, 101);
    let report: Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert_eq!(report["config"]["boundary"]["obstacle"], "abs(x) + 0.2*sin(5*x)");
}
