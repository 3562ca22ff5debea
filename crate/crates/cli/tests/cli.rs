use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", name].iter().collect();
    path.to_string_lossy().into_owned()
}

fn pcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcal")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn exact_solve_reports_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let pred_path = dir.path().join("pred.json");
    let out = pcal(&["solve", &fixture("win_win.json"), "--output", pred_path.to_str().unwrap()]);
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((summary["objective"].as_f64().unwrap() - 2.15).abs() <= 1e-4);
    assert!(summary["ece"].as_f64().unwrap() <= 0.04 + 1e-7);
    assert_eq!(summary["support_size"].as_u64().unwrap(), 3);
    assert_eq!(summary["event_supports"].as_array().unwrap().len(), 3);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&pred_path).unwrap()).unwrap();
    assert_eq!(written, summary["predictor"]);
}

#[test]
fn fptas_solve_meets_its_guarantee() {
    let out = pcal(&["solve", &fixture("win_win.json"), "--method", "fptas", "--delta", "0.1", "--format", "csv"]);
    let text = stdout(&out);
    assert!(text.starts_with("method,epsilon,objective,payoff,agent_payoff,ece,support_size\n"));
    let row = &csv_rows(&text)[0];
    assert_eq!(row[0], "fptas");
    assert!(row[2].parse::<f64>().unwrap() >= 0.9 * 2.15);
}

#[test]
fn budget_override_changes_the_solution() {
    let out = pcal(&["solve", &fixture("win_win.json"), "--eps-override", "0.8"]);
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((summary["objective"].as_f64().unwrap() - 5.0).abs() <= 1e-9);
}

#[test]
fn invalid_inputs_exit_with_two() {
    for (file, code) in [("bad_prior.json", "BAD_PRIOR"), ("malformed.json", "BAD_INSTANCE")] {
        let out = pcal(&["solve", &fixture(file)]);
        assert_eq!(out.status.code(), Some(2), "{file}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with(&format!("error[{code}]")), "{file}: {err}");
    }
    let out = pcal(&["solve", &fixture("win_win.json"), "--eps-override", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = pcal(&["eval", &fixture("win_win.json"), &fixture("f_dagger.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[BAD_PREDICTOR]"));
}

#[test]
fn exact_rejects_other_norms() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("two_event.json")).unwrap();
    let path = dir.path().join("l2.json");
    std::fs::write(&path, text.replace("\"norm\": 1", "\"norm\": 2")).unwrap();
    let out = pcal(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[UNSUPPORTED_NORM]"));
    let out = pcal(&["solve", path.to_str().unwrap(), "--method", "fptas"]);
    assert!(out.status.success());
}

#[test]
fn eval_prints_calibration_errors() {
    let text = stdout(&pcal(&["eval", &fixture("two_event.json"), &fixture("f_ddagger.json")]));
    assert!(text.contains("ece t=1: 0.15\n"));
    assert!(text.contains("ece t=2: 0.158113883008\n"));
    assert!(text.contains("ece t=inf: 0.2\n"));

    let text = stdout(&pcal(&["eval", &fixture("two_event.json"), &fixture("calibrated.json")]));
    for t in ["1", "2", "inf"] {
        assert!(text.contains(&format!("ece t={t}: 0\n")), "{text}");
    }
}

#[test]
fn eval_on_case_one_predictor() {
    let out = pcal(&[
        "eval",
        &fixture("win_win.json"),
        &fixture("win_win_case1.json"),
        "--eps-override",
        "0.02",
        "--format",
        "json",
    ]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["payoff"].as_f64().unwrap() - 1.75).abs() <= 1e-12);
    assert!((report["agent_payoff"].as_f64().unwrap() + 0.19998).abs() <= 1e-4);
    assert!((report["ece"]["1"].as_f64().unwrap() - 0.02).abs() <= 1e-12);
}

#[test]
fn sweep_rows_follow_the_budget_order() {
    let out = pcal(&["sweep", &fixture("win_win.json"), "--eps", "0.05,0,0.025"]);
    let text = stdout(&out);
    assert!(text.starts_with("epsilon,principal_payoff,agent_payoff,ece,status\n"));
    let rows = csv_rows(&text);
    let eps: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(eps, ["0.05", "0", "0.025"]);
    let principal: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for (got, want) in principal.iter().zip([2.25, 0.75, 2.0]) {
        assert!((got - want).abs() <= 1e-9);
    }
    assert!(rows[1][2].parse::<f64>().unwrap().abs() <= 1e-9);
    assert!(rows.iter().all(|r| r[4] == "ok"));
}

#[test]
fn sweep_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = pcal(&[
            "sweep",
            &fixture("win_win.json"),
            "--eps",
            "0,0.01,0.04,0.07,0.2,0.5,0.8",
            "--method",
            "fptas",
            "--output",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn constant_utility_gives_a_flat_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("two_event.json")).unwrap();
    let path = dir.path().join("flat.json");
    std::fs::write(&path, text.replace("\"low\": [0, 0], \"high\": [1, 1]", "\"low\": [1, 1], \"high\": [1, 1]"))
        .unwrap();
    let rows = csv_rows(&stdout(&pcal(&["sweep", path.to_str().unwrap(), "--eps", "0,0.1,0.3"])));
    assert!(rows.iter().all(|r| r[1] == "1"), "{rows:?}");
}

#[test]
fn reliability_rows() {
    let text = stdout(&pcal(&["reliability", &fixture("two_event.json"), &fixture("f_ddagger.json")]));
    assert_eq!(text, "p,kappa,marginal_mass\n0.4,0.3,0.5\n0.7,0.9,0.5\n");

    let rows = csv_rows(&stdout(&pcal(&["reliability", &fixture("two_event.json"), &fixture("calibrated.json")])));
    assert!(rows.iter().all(|r| r[0] == r[1]));

    let rows = csv_rows(&stdout(&pcal(&["reliability", &fixture("win_win.json"), &fixture("win_win_case2.json")])));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][..2], ["1".to_string(), "1".to_string()]);
}

#[test]
fn verify_structure_accepts_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.json");
    assert!(pcal(&["solve", &fixture("binary.json"), "-o", pred.to_str().unwrap()]).status.success());
    let out = pcal(&["verify-structure", &fixture("binary.json"), pred.to_str().unwrap()]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["ok"], Value::Bool(true));
    assert!(report["structure"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_structure_flags_suboptimal_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("reveal.json");
    std::fs::write(&pred, r#"{ "support": [0.1, 0.4, 0.8], "mass": [[1, 0, 0], [0, 1, 0], [0, 0, 1]] }"#).unwrap();
    let out = pcal(&["verify-structure", &fixture("binary.json"), pred.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["ok"], Value::Bool(false));
}

#[test]
fn grid_dump_contains_the_means() {
    let out = pcal(&["grid", &fixture("two_event.json"), "--delta", "0.1"]);
    let grid: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let points: Vec<f64> = grid["points"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for x in [0.0, 0.3, 0.9, 1.0] {
        assert!(points.iter().any(|p| (p - x).abs() <= 1e-12), "{x} missing");
    }
    assert!(points.windows(2).all(|w| w[0] < w[1]));
    let out = pcal(&["grid", &fixture("two_event.json"), "--delta", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[BAD_DELTA]"));
}
