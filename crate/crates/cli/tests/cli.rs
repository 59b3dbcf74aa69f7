use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ysm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ysm"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Value following `key` on a `key value` stdout line.
fn field(out: &Output, key: &str) -> f64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no `{key}` in {}", stdout(out)))
        .parse()
        .unwrap()
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--zeta",
        "0.3",
        "--tau",
        "0.1",
        "--agents",
        "100",
        "--dt",
        "0.01",
        "--t-end",
        "5",
        "--out",
        p(out),
    ];
    if !extra.contains(&"--seed") {
        args.extend_from_slice(&["--seed", "7"]);
    }
    args.extend_from_slice(extra);
    ysm(&args)
}

#[test]
fn simulate_writes_run_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["series.csv", "final_wealths.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 7);
    assert!(field(&out, "top1_share") > 0.0);
}

#[test]
fn missing_zeta_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = ysm(&[
        "simulate",
        "--tau",
        "0.1",
        "--agents",
        "10",
        "--seed",
        "1",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("zeta"), "{}", stderr(&out));
}

#[test]
fn oversized_step_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &["--dt", "1.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dt"), "{}", stderr(&out));
}

#[test]
fn seed_is_required_and_errors_are_aggregated() {
    let dir = tempfile::tempdir().unwrap();
    let out = ysm(&["simulate", "--agents", "10", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for name in ["zeta", "tau", "seed"] {
        assert!(err.contains(name), "missing {name} in {err}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&ysm(&["simulate", "--no-such-flag"])), 2);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"zeta": 0.3, "tau": 0.1, "agents": 40, "dt": 0.01, "t_end": 2.0, "seed": 1}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = ysm(&[
        "simulate",
        "--config",
        p(&cfg),
        "--agents",
        "60",
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let wealths = fs::read_to_string(out_dir.join("final_wealths.csv")).unwrap();
    assert_eq!(wealths.lines().count(), 61);

    fs::write(&cfg, r#"{"zeta": 0.3, "bogus": 1}"#).unwrap();
    assert_eq!(code(&ysm(&["simulate", "--config", p(&cfg)])), 2);
}

#[test]
fn theory_reports_steady_state_and_criticality() {
    let out = ysm(&["theory", "--zeta", "0.2", "--tau-inf", "0.1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(field(&out, "c_infinity"), 0.5);
    assert!(stdout(&out).contains("critical false"));

    let out = ysm(&["theory", "--zeta", "0.1", "--tau-inf", "0.1"]);
    assert_eq!(field(&out, "c_infinity"), 0.0);
    assert!(stdout(&out).contains("critical true"));

    assert_eq!(
        code(&ysm(&["theory", "--zeta", "-1", "--tau-inf", "0.1"])),
        2
    );
}

#[test]
fn zero_initial_condensate_stays_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    for method in ["closed", "numerical"] {
        let out = ysm(&[
            "theory",
            "--zeta",
            "0.3",
            "--tau-inf",
            "0.1",
            "--c0",
            "0",
            "--method",
            method,
            "--trajectory",
            p(&path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 201);
        assert!(rows
            .iter()
            .all(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap() == 0.0));
    }
    assert!(dir.path().join("traj.manifest.json").exists());
}

#[test]
fn analyze_self_fits_a_theory_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = ysm(&[
        "theory",
        "--zeta",
        "0.3",
        "--tau-inf",
        "0.1",
        "--c0",
        "0.05",
        "--trajectory",
        p(&path),
    ]);
    assert_eq!(code(&out), 0);
    let analysis = dir.path().join("analysis");
    let out = ysm(&["analyze", p(&path), "--out", p(&analysis)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(field(&out, "rms_residual") < 1e-10);
    assert!((field(&out, "c_hat") - 2.0 / 3.0).abs() < 1e-8);
    assert!(analysis.join("logistic_fit.csv").exists());
}

#[test]
fn analyze_without_condensate_keeps_gini_columns_equal() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("fp");
    let out = ysm(&[
        "fp-solve",
        "--zeta",
        "0",
        "--tau",
        "0.1",
        "--agents",
        "100",
        "--c0",
        "0",
        "--bins",
        "100",
        "--t-end",
        "2",
        "--record-interval",
        "0.5",
        "--out",
        p(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let analysis = dir.path().join("analysis");
    let out = ysm(&["analyze", p(&run), "--out", p(&analysis)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(analysis.join("gini_decomposition.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = rec.iter().map(|x| x.parse().unwrap()).collect();
        // only the e^-50 tail beyond w_max can escape
        assert!(v[1] < 1e-15);
        assert!((v[2] - v[3]).abs() < 1e-15);
        assert!((v[3] - v[4]).abs() < 1e-15);
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn analyze_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&simulate(&run, &[])), 0);

    let series = run.join("series.csv");
    let mut text = fs::read_to_string(&series).unwrap();
    text.push_str("3.0,oops,0,0,0,0,0\n");
    fs::write(&series, text).unwrap();
    let out = ysm(&["analyze", p(&run), "--out", p(&dir.path().join("a"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));

    let manifest = run.join("manifest.json");
    let text = fs::read_to_string(&manifest).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["schema_version"] = "0.0-other".into();
    fs::write(&manifest, value.to_string()).unwrap();
    let out = ysm(&["analyze", p(&run), "--out", p(&dir.path().join("b"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("schema"), "{}", stderr(&out));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&simulate(&a, &[])), 0);
    assert_eq!(code(&simulate(&b, &[])), 0);
    for f in ["series.csv", "final_wealths.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = dir.path().join("c");
    assert_eq!(code(&simulate(&c, &["--seed", "8"])), 0);
    assert_ne!(
        fs::read(a.join("final_wealths.csv")).unwrap(),
        fs::read(c.join("final_wealths.csv")).unwrap()
    );
}

#[test]
fn sweep_runs_a_plan_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let out_dir = dir.path().join("sweep");
    fs::write(
        &plan,
        serde_json::json!({
            "engine": "theory",
            "grid": {"zeta": [0.05, 0.3], "tau": [0.1], "n_agents": [100], "dt": [0.01], "t_end": [200.0]},
            "initial": {"kind": "oligarch", "c0": 0.05},
            "output_dir": out_dir,
        })
        .to_string(),
    )
    .unwrap();
    let out = ysm(&["sweep", "--plan", p(&plan)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let agg = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
    assert!(out_dir.join("summary.json").exists());

    fs::remove_dir_all(&out_dir).unwrap();
    fs::create_dir_all(out_dir.join("jobs")).unwrap();
    fs::write(out_dir.join("jobs/cell0001_seed000"), "blocked").unwrap();
    let out = ysm(&["sweep", "--plan", p(&plan)]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("cell0001_seed000"),
        "{}",
        stderr(&out)
    );

    fs::write(&plan, r#"{"engine": "mc", "output_dir": "x", "seeds": 0}"#).unwrap();
    assert_eq!(code(&ysm(&["sweep", "--plan", p(&plan)])), 2);
}
