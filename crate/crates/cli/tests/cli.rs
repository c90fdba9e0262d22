use std::process::{Command, Output};

use serde_json::Value;

fn qigeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qigeom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = qigeom(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn rows(v: &Value) -> &Vec<Value> {
    v["rows"].as_array().unwrap()
}

#[test]
fn bloch_bures_tensor_matches_closed_form() {
    let v = json(&[
        "metric",
        "--family",
        "bloch",
        "--metric",
        "bures",
        "--point",
        "0.5,1.0,2.0",
    ]);
    let (r, t1) = (0.5f64, 1.0f64);
    let expect = [
        1.0 / (4.0 * (1.0 - r * r)),
        r * r / 4.0,
        r * r * t1.sin().powi(2) / 4.0,
    ];
    for row in rows(&v) {
        let (i, j) = (row["i"].as_u64().unwrap(), row["j"].as_u64().unwrap());
        let g = row["g"].as_f64().unwrap();
        let want = if i == j { expect[i as usize] } else { 0.0 };
        assert!((g - want).abs() < 1e-9, "g[{i}][{j}] = {g}, want {want}");
    }
    let vol = v["summary"]["volume_element"].as_f64().unwrap();
    assert!((vol - (expect[0] * expect[1] * expect[2]).sqrt()).abs() < 1e-9);
    assert_eq!(v["summary"]["null_flag"], false);
    assert_eq!(v["config"]["seed"], 0);
}

#[test]
fn null_checks() {
    let v = json(&[
        "metric",
        "--family",
        "ar_bell",
        "--metric",
        "bures",
        "--q",
        "2",
        "--null-check",
    ]);
    assert_eq!(rows(&v)[0]["null"], false);
    let v = json(&[
        "metric",
        "--family",
        "escort_qubit",
        "--metric",
        "bures_extended",
        "--null-check",
    ]);
    assert_eq!(rows(&v)[0]["null"], true);
}

#[test]
fn ar_bell_silver_mean_for_every_q() {
    let v = json(&[
        "sepprob", "--family", "ar_bell", "--metric", "bures", "--q", "0.5,1,2",
    ]);
    assert_eq!(rows(&v).len(), 3);
    for row in rows(&v) {
        let p = row["prob"].as_f64().unwrap();
        assert!((p - (2f64.sqrt() - 1.0)).abs() < 1e-6, "{p}");
    }
}

#[test]
fn tlb_hs_is_one_half() {
    let v = json(&["sepprob", "--family", "tlb", "--metric", "hs"]);
    let p = rows(&v)[0]["prob"].as_f64().unwrap();
    assert!((p - 0.5).abs() < 1e-6, "{p}");
}

#[test]
fn trivariate_hs_closed_form_comparison() {
    let v = json(&[
        "sepprob",
        "--family",
        "trivariate",
        "--metric",
        "hs",
        "--alpha-grid",
        "-3:3:0.1",
        "--compare-closed-form",
    ]);
    assert_eq!(rows(&v).len(), 61);
    assert!(v["summary"]["compared_points"].as_u64().unwrap() >= 50);
    assert!(v["summary"]["max_deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["summary"]["points_outside_3err"], 0);
}

#[test]
fn clarke_verdict_and_ranking() {
    let v = json(&[
        "priors",
        "compare",
        "p_B",
        "p_Bq1trunc",
        "--record",
        "xyz-pairs",
    ]);
    assert_eq!(rows(&v)[0]["verdict"], "p_B");
    let v = json(&["priors", "rank", "--all", "--record", "xyz-pairs"]);
    assert_eq!(v["summary"]["ordering"], "p_Fq1 > p_B > p_Bq1trunc > p_F");
    assert_eq!(rows(&v).len(), 6);
}

#[test]
fn biasedness_csv_has_fifty_rows() {
    let out = qigeom(&[
        "--format",
        "csv",
        "priors",
        "biasedness",
        "--r",
        "0.995:1:50",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# quantity: priors.radial_marginal"));
    let table: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table[0], "r,p_Fq1,p_B,p_Bq1trunc,p_F");
    assert_eq!(table.len(), 51);
}

#[test]
fn domain_errors_exit_2_with_json_diagnostic() {
    let out = qigeom(&["metric", "--family", "no_such_family", "--point", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let d: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(d["error"], "domain");
    assert_eq!(d["exit_code"], 2);
    assert!(out.stdout.is_empty());

    let out = qigeom(&["--tol", "0", "sepprob", "--family", "tlb"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn support_mismatch_exits_4() {
    let out = qigeom(&["priors", "compare", "p_B", "p_F", "--record", "q:xyz-pairs"]);
    assert_eq!(out.status.code(), Some(4));
    let d: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(d["error"], "support_mismatch");
}

#[test]
fn invalid_grid_points_are_recorded_not_fatal() {
    let v = json(&[
        "scan",
        "--family",
        "bivariate",
        "--metric",
        "hs",
        "--grid",
        "-2:2:1",
    ]);
    let rows = rows(&v);
    assert_eq!(rows.len(), 5);
    assert!(rows[1]["prob"].is_null());
    assert!(rows[1]["error"].as_str().unwrap().contains("alpha"));
    assert!(rows[3]["prob"].as_f64().is_some());
    assert_eq!(v["summary"]["failed_points"], 2);
}

#[test]
fn output_is_byte_identical_across_runs_and_threads() {
    let args = |t: &'static str| {
        vec![
            "--threads",
            t,
            "--seed",
            "11",
            "--format",
            "csv",
            "sepprob",
            "--family",
            "trivariate",
            "--metric",
            "bures",
            "--alpha",
            "0.5,2",
            "--mc",
            "20000",
        ]
    };
    let a = qigeom(&args("1"));
    let b = qigeom(&args("4"));
    let c = qigeom(&args("4"));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(b.stdout, c.stdout);
    let other = qigeom(&[
        "--threads",
        "4",
        "--seed",
        "12",
        "--format",
        "csv",
        "sepprob",
        "--family",
        "trivariate",
        "--metric",
        "bures",
        "--alpha",
        "0.5,2",
        "--mc",
        "20000",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn out_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("qigeom-out-{}.json", std::process::id()));
    let out = qigeom(&["--out", path.to_str().unwrap(), "husimi", "normalization"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(rows(&v).len(), 2);
}

#[test]
fn selftest_exit_status_follows_criteria() {
    let out = qigeom(&["selftest", "--criteria", "11"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion 11 PASS"));
    let out = qigeom(&["selftest", "--criteria", "14"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion 14 FAIL"));
}
