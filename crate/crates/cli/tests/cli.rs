use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annuitize"))
        .args(args)
        .env_remove("ANNUITIZE_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_reports_boundary_and_manifest() {
    let o = run(&["--preset", "m3", "--thresholds", "unleveraged", "solve"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "Stopping");
    let xs = v["x_star"].as_f64().unwrap();
    assert!((xs - 1855.29).abs() < 0.05);
    assert_eq!(v["manifest"]["params"]["beta"], 0.5);
    assert_eq!(v["manifest"]["threshold_scaling"], "unleveraged");
    assert!(v["manifest"]["derived"]["A_coef"].is_number());
}

#[test]
fn x_star_flag_prints_single_number() {
    let o = run(&["--preset", "m1", "solve", "--x-star"]);
    assert!(o.status.success());
    let x: f64 = stdout(&o).trim().parse().unwrap();
    assert!((x - 1409.93).abs() < 0.05);
}

#[test]
fn exit_codes() {
    let ruined = run(&["--set", "alpha=1", "solve", "--x-star"]);
    assert_eq!(ruined.status.code(), Some(3));
    let ruined_sim = run(&["--set", "alpha=1", "simulate", "--paths", "5"]);
    assert_eq!(ruined_sim.status.code(), Some(3));
    assert_eq!(run(&["--set", "k=0.02", "solve"]).status.code(), Some(2));
    assert_eq!(run(&["--set", "bogus=1", "solve"]).status.code(), Some(2));
    assert_eq!(run(&["--set", "beta", "solve"]).status.code(), Some(2));
    assert_eq!(run(&["--preset", "m9", "solve"]).status.code(), Some(2));
    assert_eq!(run(&["--thresholds", "sideways", "solve"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--no-such-flag"]).status.code(), Some(2));
    let above = run(&["--preset", "m1", "simulate", "--x0-list", "500,5000", "--paths", "5"]);
    assert_eq!(above.status.code(), Some(2));
}

#[test]
fn params_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let base = run(&["--preset", "m2", "solve"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&base)).unwrap();
    fs::write(&path, v["manifest"]["params"].to_string()).unwrap();
    let from_file = run(&["--params", path.to_str().unwrap(), "solve", "--x-star"]);
    let x_file: f64 = stdout(&from_file).trim().parse().unwrap();
    let x_preset = v["x_star"].as_f64().unwrap();
    assert!((x_file - x_preset).abs() < 1e-9 * x_preset);

    fs::write(&path, r#"{"r": 0.035}"#).unwrap();
    assert_eq!(run(&["--params", path.to_str().unwrap(), "solve"]).status.code(), Some(2));

    let a = run(&["--set", "beta=2", "solve", "--x-star"]);
    let b = run(&["--set", "beta=0.5", "solve", "--x-star"]);
    let (a, b): (f64, f64) = (stdout(&a).trim().parse().unwrap(), stdout(&b).trim().parse().unwrap());
    assert!(a < b);
}

#[test]
fn sweep_csv_shape() {
    let o = run(&["sweep", "--param", "r", "--from", "0.01", "--to", "0.05", "--steps", "5", "--value-at", "1000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param_value,x_star,y_star,value_at_x");
    assert_eq!(lines.len(), 6);
    let xs: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[1] < w[0]));

    let ruined = run(&["sweep", "--param", "alpha", "--from", "0.5", "--to", "1", "--steps", "2"]);
    assert!(stdout(&ruined).lines().nth(2).unwrap().ends_with(",,"));

    let grid = run(&["sweep", "--param", "w", "--from", "50", "--to", "100", "--steps", "2", "--param2", "b_max", "--from2", "0", "--to2", "1", "--steps2", "3"]);
    let g = stdout(&grid);
    assert_eq!(g.lines().next().unwrap(), "param_value,param2_value,x_star,y_star");
    assert_eq!(g.lines().count(), 7);
}

#[test]
fn value_grid() {
    let o = run(&["--preset", "m3", "value", "--x-from", "500", "--x-to", "3000", "--steps", "6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][6], "false");
    assert_eq!(rows[5][6], "true");
}

#[test]
fn simulate_writes_files_deterministically() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let o = run(&["--preset", "m2", "--out", d.path().to_str().unwrap(), "simulate", "--paths", "50", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let p1 = fs::read(d1.path().join("paths.csv")).unwrap();
    assert_eq!(p1, fs::read(d2.path().join("paths.csv")).unwrap());
    assert_eq!(String::from_utf8(p1).unwrap().lines().count(), 51);

    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(d1.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["manifest"]["seed"], 7);
    assert_eq!(s["stats"]["n_paths"], 50);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d1.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["n_paths"], 50);
}

#[test]
fn out_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_annuitize"))
        .args(["--preset", "m3", "simulate", "--paths", "20", "--x0-list", "500,1000"])
        .env("ANNUITIZE_OUT", d.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let csv = fs::read_to_string(d.path().join("initial_wealth.csv")).unwrap();
    assert!(csv.starts_with("x0,mean_tau,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn verify_passes_and_detects_perturbation() {
    let ok = run(&["--preset", "m1", "verify", "--paths", "500"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let checks: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert!(checks.as_array().unwrap().iter().any(|c| c["check"] == "budget_identity"));

    let bad = run(&["--preset", "m1", "verify", "--no-monte-carlo", "--perturb-boundary", "1.01"]);
    assert_eq!(bad.status.code(), Some(1));
    let checks: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    let sp = checks.as_array().unwrap().iter().find(|c| c["check"] == "smooth_pasting").unwrap();
    assert_eq!(sp["passed"], false);
}
