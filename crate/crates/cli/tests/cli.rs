use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use octrl_cli::csvio::read_path_csv;
use serde_json::Value;

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn octrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octrl")).args(args).output().unwrap()
}

fn octrl_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octrl"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Any failed verdict anywhere in a report.
fn failures(v: &Value, at: &str, found: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let here = format!("{at}/{k}");
                match (k.as_str(), child) {
                    ("pass" | "verified" | "optimal", Value::Bool(false)) => found.push(here.clone()),
                    ("status", Value::String(s)) if s == "violated" || s == "fail" || s == "error" => {
                        found.push(here.clone())
                    }
                    _ => {}
                }
                failures(child, &here, found);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                failures(child, &format!("{at}/{i}"), found);
            }
        }
        _ => {}
    }
}

fn assert_exit_contract(out: &Output, report: &Value) {
    let mut found = Vec::new();
    failures(report, "", &mut found);
    assert_eq!(report["exit_code"], code(out));
    if code(out) == 0 {
        assert!(found.is_empty(), "exit 0 with failed verdicts at {found:?}");
    } else {
        assert_ne!(report["status"], "pass");
    }
}

#[test]
fn solve_example1_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (traj, rep) = (dir.path().join("traj.csv"), dir.path().join("out.json"));
    let out = octrl(&[
        "solve",
        "--problem",
        s(&problem("example1.prob")),
        "--T",
        "600",
        "--out",
        s(&traj),
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x,c,lambda,euler_residual,tvc_proxy");
    assert_eq!(text.lines().count(), 10002);
    let report = read_json(&rep);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["command"], "solve");
    let c0 = report["shooting"]["c0"].as_f64().unwrap();
    assert!((c0 - 0.15).abs() <= 1e-9, "{c0}");
    assert_eq!(report["problem"]["fingerprint"].as_str().unwrap().len(), 64);
    assert_exit_contract(&out, &report);
}

#[test]
fn emitted_path_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let out = octrl(&[
        "solve",
        "--problem",
        s(&problem("example1.prob")),
        "--n-report",
        "2001",
        "--out",
        s(&traj),
    ]);
    assert_eq!(code(&out), 0);

    let mut raw = csv::Reader::from_path(&traj).unwrap();
    let rows: Vec<Vec<f64>> = raw
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let back = read_path_csv(&traj).unwrap();
    let lambda = back.multiplier.unwrap().lambda;
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0].to_bits(), back.path.t[k].to_bits());
        assert_eq!(row[1].to_bits(), back.path.x[k].to_bits());
        assert_eq!(row[2].to_bits(), back.path.c[k].to_bits());
        assert_eq!(row[3].to_bits(), lambda[k].to_bits());
        assert_eq!(row[5].to_bits(), (row[3] * row[1]).to_bits());
    }

    let rep = dir.path().join("v.json");
    let out = octrl(&[
        "verify",
        "--problem",
        s(&problem("example1.prob")),
        "--path",
        s(&traj),
        "--report",
        s(&rep),
    ]);
    let report = read_json(&rep);
    assert_eq!(code(&out), 0, "{}", report["necessary"]["verdict"]);
    assert_exit_contract(&out, &report);
}

#[test]
fn check_ramsey_with_log_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("check.json");
    let out = octrl(&[
        "check",
        "--problem",
        s(&problem("ramsey.prob")),
        "--family",
        "log",
        "--lambda-bar",
        "0.5",
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0);
    let report = read_json(&rep);
    let records = report["checks"]["records"].as_array().unwrap();
    assert!(records.len() >= 4);
    assert!(records.iter().all(|r| r["pass"] == true));
    assert_exit_contract(&out, &report);
}

#[test]
fn check_fails_for_convex_utility() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("convex.prob");
    std::fs::write(&prob, "theta = 0.03\nu = \"c^2\"\nf = \"x^0.3\"\nx0 = 1\n").unwrap();
    let rep = dir.path().join("r.json");
    let out = octrl(&["check", "--problem", s(&prob), "--report", s(&rep)]);
    assert_eq!(code(&out), 1);
    let report = read_json(&rep);
    let failed: Vec<&Value> = report["checks"]["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["pass"] == false)
        .collect();
    assert!(!failed.is_empty());
    assert!(failed[0]["worst"]["point"].is_object());
    assert_exit_contract(&out, &report);
}

#[test]
fn verify_rejects_doubled_consumption() {
    let dir = tempfile::tempdir().unwrap();
    let (good, bad) = (dir.path().join("good.csv"), dir.path().join("bad.csv"));
    let out = octrl(&[
        "solve",
        "--problem",
        s(&problem("example1.prob")),
        "--n-report",
        "1001",
        "--out",
        s(&good),
    ]);
    assert_eq!(code(&out), 0);
    let mut r = csv::Reader::from_path(&good).unwrap();
    let mut w = csv::Writer::from_path(&bad).unwrap();
    w.write_record(r.headers().unwrap()).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let mut fields: Vec<String> = rec.iter().map(str::to_string).collect();
        fields[2] = format!("{:.16e}", 2.0 * fields[2].parse::<f64>().unwrap());
        w.write_record(&fields).unwrap();
    }
    w.flush().unwrap();

    let rep = dir.path().join("bad.json");
    let out = octrl(&[
        "verify",
        "--problem",
        s(&problem("example1.prob")),
        "--path",
        s(&bad),
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 1);
    let report = read_json(&rep);
    assert_eq!(report["necessary"]["verdict"]["status"], "violated");
    let foc = &report["necessary"]["foc"];
    let threshold = report["necessary"]["foc_c_threshold"].as_f64().unwrap();
    assert!(foc["sup_r_c"].as_f64().unwrap() > threshold);
    assert!(foc["argmax_r_c"].is_number());
    assert_exit_contract(&out, &report);
}

#[test]
fn sweep_matches_closed_form_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let (csv_out, rep) = (dir.path().join("sweep.csv"), dir.path().join("sweep.json"));
    let out = octrl(&[
        "sweep",
        "--problem",
        s(&problem("example1.prob")),
        "--param",
        "R",
        "--from",
        "0.04",
        "--to",
        "0.08",
        "--n",
        "5",
        "--out",
        s(&csv_out),
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let mut r = csv::Reader::from_path(&csv_out).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "R",
            "c0",
            "x_star",
            "mu_stable",
            "mu_unstable",
            "tvc_proxy",
            "verified",
            "error"
        ]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    let mut last = f64::NEG_INFINITY;
    for row in &rows {
        let big_r: f64 = row[0].parse().unwrap();
        let c0: f64 = row[1].parse().unwrap();
        assert!(big_r > last);
        last = big_r;
        let exact = 0.03 * (1.0 + 0.2 / big_r);
        assert!((c0 - exact).abs() <= 1e-4 * exact, "R = {big_r}: {c0} vs {exact}");
        assert_eq!(&row[6], "true");
        assert_eq!(&row[7], "");
    }
    assert_exit_contract(&out, &read_json(&rep));
}

#[test]
fn single_value_sweep_is_a_solve() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let p = problem("example1.prob");
    let out = octrl(&[
        "sweep",
        "--problem",
        s(&p),
        "--param",
        "R",
        "--from",
        "0.06",
        "--to",
        "0.09",
        "--n",
        "1",
        "--report",
        s(&a),
    ]);
    assert_eq!(code(&out), 0);
    let out = octrl(&["solve", "--problem", s(&p), "--set", "R=0.06", "--report", s(&b)]);
    assert_eq!(code(&out), 0);
    let rows = read_json(&a)["sweep"]["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 1);
    let solve = read_json(&b)["shooting"].clone();
    assert_eq!(rows[0]["c0"], solve["c0"]);
    assert_eq!(rows[0]["tvc_proxy"], solve["tvc_proxy_at_t"]);
}

#[test]
fn sweep_on_ramsey_reports_saddle_rates() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let out = octrl(&[
        "sweep",
        "--problem",
        s(&problem("ramsey.prob")),
        "--param",
        "alpha",
        "--from",
        "0.25",
        "--to",
        "0.35",
        "--n",
        "3",
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    for row in read_json(&rep)["sweep"]["rows"].as_array().unwrap() {
        let alpha = row["value"].as_f64().unwrap();
        let x_star = (alpha / 0.03f64).powf(1.0 / (1.0 - alpha));
        assert!((row["x_star"].as_f64().unwrap() - x_star).abs() <= 1e-9 * x_star);
        assert!(row["mu_stable"].as_f64().unwrap() < 0.0);
        assert!(row["mu_unstable"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (one, four) = (dir.path().join("1.csv"), dir.path().join("4.csv"));
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--problem".into(),
            s(&problem("example1.prob")).into(),
            "--param".into(),
            "w".into(),
            "--from".into(),
            "0.0".into(),
            "--to".into(),
            "0.5".into(),
            "--n".into(),
            "6".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let a: Vec<String> = args(&one);
    let b: Vec<String> = args(&four);
    let out = octrl_env(&a.iter().map(String::as_str).collect::<Vec<_>>(), "OCTRL_THREADS", "1");
    assert_eq!(code(&out), 0);
    let out = octrl_env(&b.iter().map(String::as_str).collect::<Vec<_>>(), "OCTRL_THREADS", "4");
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&four).unwrap());
    let out = octrl_env(
        &a.iter().map(String::as_str).collect::<Vec<_>>(),
        "OCTRL_THREADS",
        "many",
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_sweep_parameter_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let out = octrl(&[
        "sweep",
        "--problem",
        s(&problem("example1.prob")),
        "--param",
        "bogus",
        "--from",
        "0",
        "--to",
        "1",
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 2);
    let report = read_json(&rep);
    assert_eq!(report["status"], "error");
    assert_eq!(report["error"]["kind"], "usage");
    assert!(report["error"]["message"].as_str().unwrap().contains("bogus"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&octrl(&["frobnicate"])), 2);
    assert_eq!(code(&octrl(&["solve"])), 2);
    assert_eq!(code(&octrl(&["solve", "--problem", "/nonexistent/x.prob"])), 2);
    assert_eq!(
        code(&octrl(&[
            "solve",
            "--problem",
            s(&problem("example1.prob")),
            "--set",
            "nope=1"
        ])),
        2
    );
    assert_eq!(
        code(&octrl(&[
            "solve",
            "--problem",
            s(&problem("example1.prob")),
            "--set",
            "R"
        ])),
        2
    );
    assert_eq!(
        code(&octrl(&[
            "check",
            "--problem",
            s(&problem("ramsey.prob")),
            "--family",
            "crra"
        ])),
        2
    );
    assert_eq!(code(&octrl(&["--help"])), 0);
}

#[test]
fn numeric_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("norest.prob");
    // u depends on x and the canonical system has no rest point
    std::fs::write(
        &prob,
        "theta = 0.03\nu = \"ln(c)\"\nv = \"ln(x)\"\nR = \"0.05\"\nw = \"0.2\"\nx0 = 1\n",
    )
    .unwrap();
    let rep = dir.path().join("r.json");
    let out = octrl(&["solve", "--problem", s(&prob), "--report", s(&rep)]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&rep);
    assert_eq!(report["error"]["kind"], "numeric");
    assert_eq!(report["exit_code"], 3);
}

#[test]
fn oracle_agrees_with_solver() {
    let dir = tempfile::tempdir().unwrap();
    let (rep, table, greedy) = (
        dir.path().join("o.json"),
        dir.path().join("table.csv"),
        dir.path().join("greedy.csv"),
    );
    let out = octrl(&[
        "oracle",
        "--problem",
        s(&problem("example1.prob")),
        "--T",
        "20",
        "--dt",
        "0.1",
        "--nx",
        "400",
        "--table",
        s(&table),
        "--out",
        s(&greedy),
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&rep);
    let o = &report["oracle"];
    assert!(o["rel_gap"].as_f64().unwrap().abs() <= 1e-2);
    assert!(o["c0_rel_diff"].as_f64().unwrap().abs() <= 2e-2);
    assert_eq!(o["grid"]["terminal"]["kind"], "pin");
    let table_text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(table_text.lines().next().unwrap(), "k,t,x_i,V,c_policy");
    assert_eq!(read_path_csv(&greedy).unwrap().path.len(), 201);
    assert_exit_contract(&out, &report);
}

#[test]
fn example1_subcommand_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let (rep, traj) = (dir.path().join("e.json"), dir.path().join("e.csv"));
    let out = octrl(&["example1", "--out", s(&traj), "--report", s(&rep)]);
    assert_eq!(code(&out), 0);
    let report = read_json(&rep);
    assert!(report["example1"]["c0_rel_err"].as_f64().unwrap() <= 1e-12);
    assert_eq!(report["certificate"]["optimal"], true);
    assert_exit_contract(&out, &report);
    let p = read_path_csv(&traj).unwrap();
    assert_eq!(p.path.len(), 20_000);
    let x_end = 5.0 * (0.02f64 * 600.0).exp() - 4.0;
    assert!((p.path.x[p.path.len() - 1] - x_end).abs() <= 1e-9 * x_end);

    let out = octrl(&["example1", "--R", "0.05", "--omega", "0", "--x0", "0"]);
    assert_eq!(code(&out), 2);
}

fn without_timings(path: &Path) -> Value {
    let mut v = read_json(path);
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let prob = problem("ramsey.prob");
    let args = ["solve", "--problem", s(&prob), "--report", s(&rep)];
    assert_eq!(code(&octrl(&args)), 0);
    let first = without_timings(&rep);
    assert_eq!(code(&octrl(&args)), 0);
    assert_eq!(first, without_timings(&rep));
    let text = std::fs::read_to_string(&rep).unwrap();
    assert!(text.contains("\"timings\""));
}

// Golden files pin the report and CSV layouts. Numbers are compared with a
// relative tolerance so that last-digit differences between platforms do
// not matter; keys, strings and booleans must match exactly.
// Regenerate with `OCTRL_UPDATE_GOLDEN=1 cargo test -p octrl-cli --test cli`.

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn normalize(mut v: Value, tmp: &Path) -> Value {
    let obj = v.as_object_mut().unwrap();
    obj.remove("timings");
    let text = serde_json::to_string(&v).unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let text = text
        .replace(s(tmp), "<tmp>")
        .replace(s(&root.canonicalize().unwrap()), "<root>")
        .replace(s(&root), "<root>");
    serde_json::from_str(&text).unwrap()
}

fn same(a: &Value, b: &Value, at: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= 1e-9 * x.abs().max(y.abs()) + 1e-12 {
                Ok(())
            } else {
                Err(format!("{at}: {x} vs {y}"))
            }
        }
        (Value::Object(p), Value::Object(q)) => {
            let (kp, kq): (Vec<_>, Vec<_>) = (p.keys().collect(), q.keys().collect());
            if kp != kq {
                return Err(format!("{at}: keys {kp:?} vs {kq:?}"));
            }
            p.iter().try_for_each(|(k, v)| same(v, &q[k], &format!("{at}/{k}")))
        }
        (Value::Array(p), Value::Array(q)) if p.len() == q.len() => p
            .iter()
            .zip(q)
            .enumerate()
            .try_for_each(|(i, (v, w))| same(v, w, &format!("{at}/{i}"))),
        _ if a == b => Ok(()),
        _ => Err(format!("{at}: {a} vs {b}")),
    }
}

fn check_golden(name: &str, actual: Value) {
    let file = golden_dir().join(name);
    if std::env::var_os("OCTRL_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&file, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        return;
    }
    let expected = read_json(&file);
    if let Err(e) = same(&expected, &actual, "") {
        panic!("{name} differs from the golden file at {e}");
    }
}

#[test]
fn golden_check_report() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("check.json");
    let out = octrl(&[
        "check",
        "--problem",
        s(&problem("ramsey.prob")),
        "--family",
        "log",
        "--grid",
        "16",
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0);
    check_golden("check_ramsey.json", normalize(read_json(&rep), dir.path()));
}

#[test]
fn golden_example1_report() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("e.json");
    let out = octrl(&["example1", "--nodes", "2001", "--report", s(&rep)]);
    assert_eq!(code(&out), 0);
    check_golden("example1.json", normalize(read_json(&rep), dir.path()));
}

#[test]
fn golden_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let out = octrl(&["example1", "--T", "600", "--nodes", "7", "--out", s(&traj)]);
    assert!(code(&out) <= 1);
    let mut r = csv::Reader::from_path(&traj).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows: Vec<Vec<Value>> = r
        .records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => serde_json::json!(x),
                    _ => Value::String(v.to_string()),
                })
                .collect()
        })
        .collect();
    check_golden(
        "example1_7_nodes.csv.json",
        serde_json::json!({ "header": header, "rows": rows }),
    );
}
