//! End-to-end tests of the `clo-topdown` binary: exit codes, output files,
//! atomicity, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clo-topdown"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn calibrate_args(out: &Path) -> Vec<String> {
    vec![
        "calibrate".into(),
        "--scenarios".into(),
        fixture("scenarios.csv"),
        "--pv".into(),
        fixture("clo_idx_pv.csv"),
        "--quotes".into(),
        fixture("clo_idx_quotes.csv"),
        "--out".into(),
        out.display().to_string(),
    ]
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

fn report_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn calibrate_emits_report_and_misd_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let output = run_owned(&calibrate_args(&out));
    assert!(output.status.success(), "{output:?}");

    let report = report_json(&out);
    assert_eq!(report["command"], "calibrate");
    let cadr = report["implied"]["cadr"].as_f64().unwrap();
    assert!((cadr - 0.1394).abs() < 0.01, "implied cadr {cadr}");
    let basis = report["basis"].as_f64().unwrap();
    assert!((basis - (-5.09)).abs() < 0.1, "basis {basis}");
    for price in report["tranche_prices"].as_array().unwrap() {
        assert!(price["price"].as_f64().unwrap() > 0.0);
    }

    let misd_csv = std::fs::read_to_string(dir.path().join("report.misd.csv")).unwrap();
    let lines: Vec<&str> = misd_csv.lines().collect();
    assert_eq!(lines[0], "cadr,weight");
    assert_eq!(lines.len(), 33);
    let total: f64 = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    assert!(run_owned(&calibrate_args(&out_a)).status.success());
    assert!(run_owned(&calibrate_args(&out_b)).status.success());
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.misd.csv")).unwrap(),
        std::fs::read(dir.path().join("b.misd.csv")).unwrap()
    );
}

#[test]
fn quote_bump_flag_runs_the_aa_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bumped.json");
    let mut args = calibrate_args(&out);
    args.push("--bump".into());
    args.push("B=+5".into());
    let output = run_owned(&args);
    assert!(output.status.success(), "{output:?}");
    let report = report_json(&out);
    assert_eq!(report["config"]["quote_bumps"][0]["tranche"], "B");
    assert_eq!(report["config"]["quote_bumps"][0]["bump"], 5.0);
    let b_price = report["tranche_prices"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["tranche"] == "B")
        .unwrap()["price"]
        .as_f64()
        .unwrap();
    assert!((b_price - 87.16).abs() <= 0.01, "bumped B price {b_price}");
}

#[test]
fn validation_failure_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad_quotes = dir.path().join("bad_quotes.csv");
    std::fs::write(&bad_quotes, "tranche,price\nNOPE,50\n").unwrap();
    let out = dir.path().join("report.json");
    let output = run(&[
        "calibrate",
        "--scenarios",
        &fixture("scenarios.csv"),
        "--pv",
        &fixture("clo_idx_pv.csv"),
        "--quotes",
        &bad_quotes.display().to_string(),
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(!out.exists());
    assert!(!dir.path().join("report.misd.csv").exists());
    assert!(!String::from_utf8_lossy(&output.stderr).is_empty());
}

#[test]
fn solver_failure_exits_3_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let mut args = calibrate_args(&out);
    args.push("--bump".into());
    args.push("B=-90".into());
    let output = run_owned(&args);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    assert!(!out.exists());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("infeasible"), "stderr: {stderr}");
}

#[test]
fn map_pins_the_aaa_and_shows_the_cert_inversion() {
    let dir = tempfile::tempdir().unwrap();
    let index_out = dir.path().join("index.json");
    assert!(run_owned(&calibrate_args(&index_out)).status.success());
    let out = dir.path().join("bespoke.json");
    let output = run(&[
        "map",
        "--index-report",
        &index_out.display().to_string(),
        "--pv",
        &fixture("clo_bspk_pv.csv"),
        "--loan-price",
        "87.84",
        "--pin",
        "A=89.35",
        "--out",
        &out.display().to_string(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = report_json(&out);
    assert_eq!(report["command"], "map");
    let price = |name: &str| {
        report["tranche_prices"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["tranche"] == name)
            .unwrap()["price"]
            .as_f64()
            .unwrap()
    };
    assert!((price("A") - 89.35).abs() <= 0.01);
    assert!(price("E") > price("D"), "E {} D {}", price("E"), price("D"));
}

#[test]
fn map_with_pin_only_omits_the_loan_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let index_out = dir.path().join("index.json");
    assert!(run_owned(&calibrate_args(&index_out)).status.success());
    let out = dir.path().join("pin_only.json");
    let output = run(&[
        "map",
        "--index-report",
        &index_out.display().to_string(),
        "--pv",
        &fixture("clo_bspk_pv.csv"),
        "--pin",
        "A=89.35",
        "--out",
        &out.display().to_string(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = report_json(&out);
    assert!(report["market_loan_price"].is_null());
    // One pinned constraint only.
    assert_eq!(report["diagnostics"]["multipliers"].as_array().unwrap().len(), 1);
    let a_price = report["tranche_prices"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["tranche"] == "A")
        .unwrap()["price"]
        .as_f64()
        .unwrap();
    assert!((a_price - 89.35).abs() <= 0.01);
}

#[test]
fn map_without_constraints_reprices_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    let index_out = dir.path().join("index.json");
    assert!(run_owned(&calibrate_args(&index_out)).status.success());
    let out = dir.path().join("plain.json");
    let output = run(&[
        "map",
        "--index-report",
        &index_out.display().to_string(),
        "--pv",
        &fixture("clo_bspk_pv.csv"),
        "--out",
        &out.display().to_string(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let index_report = report_json(&index_out);
    let map_report = report_json(&out);
    assert_eq!(index_report["misd"], map_report["misd"]);
}

#[test]
fn map_with_loan_price_needs_a_basis() {
    let dir = tempfile::tempdir().unwrap();
    // Calibrate against quotes without a market loan price.
    let quotes = dir.path().join("no_loan.csv");
    std::fs::write(
        &quotes,
        "tranche,price\nA,92.97\nB,82.16\nC,78.83\nD,72.13\nE,63.77\nSUBORD,44.89\n",
    )
    .unwrap();
    let index_out = dir.path().join("index.json");
    let output = run(&[
        "calibrate",
        "--scenarios",
        &fixture("scenarios.csv"),
        "--pv",
        &fixture("clo_idx_pv.csv"),
        "--quotes",
        &quotes.display().to_string(),
        "--out",
        &index_out.display().to_string(),
    ]);
    assert!(output.status.success());
    let out = dir.path().join("map.json");
    let output = run(&[
        "map",
        "--index-report",
        &index_out.display().to_string(),
        "--pv",
        &fixture("clo_bspk_pv.csv"),
        "--loan-price",
        "87.84",
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(!out.exists());
}

#[test]
fn risk_delta_is_monotone_and_scheme_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let run_delta = |out: &Path, bump: &str| {
        let output = run(&[
            "risk",
            "--mode",
            "delta",
            "--scenarios",
            &fixture("scenarios.csv"),
            "--pv",
            &fixture("clo_idx_pv.csv"),
            "--quotes",
            &fixture("clo_idx_quotes.csv"),
            "--bespoke-pv",
            &fixture("clo_bspk_pv.csv"),
            "--loan-price",
            "87.84",
            "--pin",
            "A=89.35",
            "--bump",
            bump,
            "--out",
            &out.display().to_string(),
        ]);
        assert!(output.status.success(), "{output:?}");
        let report = report_json(out);
        let deltas: Vec<f64> = report["risk"]["deltas"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        deltas
    };
    let full = run_delta(&dir.path().join("d1.json"), "1.0");
    assert_eq!(full.len(), 6);
    for pair in full.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-6, "{full:?}");
    }
    let half = run_delta(&dir.path().join("d05.json"), "0.5");
    for (a, b) in full.iter().zip(&half) {
        let ok = (a - b).abs() <= 0.05 || (a - b).abs() <= 0.10 * a.abs().max(b.abs());
        assert!(ok, "bump consistency: {a} vs {b}");
    }
    // CSV emitted alongside.
    let csv = std::fs::read_to_string(dir.path().join("d1.csv")).unwrap();
    assert!(csv.starts_with("tranche,delta\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn risk_tranche01_emits_full_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t01.json");
    let output = run(&[
        "risk",
        "--mode",
        "tranche01",
        "--scenarios",
        &fixture("scenarios.csv"),
        "--pv",
        &fixture("clo_idx_pv.csv"),
        "--quotes",
        &fixture("clo_idx_quotes.csv"),
        "--bespoke-pv",
        &fixture("clo_bspk_pv.csv"),
        "--loan-price",
        "87.84",
        "--pin",
        "A=89.35",
        "--constraint-mode",
        "soft:1",
        "--out",
        &out.display().to_string(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = report_json(&out);
    let matrix = report["risk"]["tranche01"].as_array().unwrap();
    assert_eq!(matrix.len(), 6);
    for row in matrix {
        assert_eq!(row.as_array().unwrap().len(), 6);
    }
    assert_eq!(report["risk"]["config"]["constraint_mode"], "soft");
    assert_eq!(report["risk"]["config"]["soft_weight"], 1.0);
    let csv = std::fs::read_to_string(dir.path().join("t01.csv")).unwrap();
    assert!(csv.starts_with("bespoke_tranche,A,B,C,D,E,SUBORD\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn synth_output_feeds_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let matrix_path = dir.path().join("synth_pv.csv");
    let output = run(&[
        "synth",
        "--spec",
        &fixture("lcdx_spec.toml"),
        "--scenarios",
        &fixture("scenarios.csv"),
        "--out",
        &matrix_path.display().to_string(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&matrix_path).unwrap();
    assert!(text.starts_with("cadr,EQ,JM,MZ,SM,SR,COL\n"));
    assert_eq!(text.lines().count(), 33);

    // Build quotes as uniform-distribution expectations of the matrix and
    // calibrate against it: the generated file is a valid PV input.
    let mut sums = vec![0.0f64; 6];
    for line in text.lines().skip(1) {
        for (j, field) in line.split(',').skip(1).enumerate() {
            sums[j] += field.parse::<f64>().unwrap();
        }
    }
    let names = ["EQ", "JM", "MZ", "SM", "SR"];
    let mut quotes_text = String::from("tranche,price\n");
    for (name, total) in names.iter().zip(&sums) {
        quotes_text.push_str(&format!("{name},{}\n", total / 32.0));
    }
    let quotes_path = dir.path().join("synth_quotes.csv");
    std::fs::write(&quotes_path, quotes_text).unwrap();
    let out = dir.path().join("synth_report.json");
    let output = run(&[
        "calibrate",
        "--scenarios",
        &fixture("scenarios.csv"),
        "--pv",
        &matrix_path.display().to_string(),
        "--quotes",
        &quotes_path.display().to_string(),
        "--out",
        &out.display().to_string(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = report_json(&out);
    // Uniform expectations calibrate back to the uniform distribution.
    for w in report["misd"].as_array().unwrap() {
        assert!((w.as_f64().unwrap() - 1.0 / 32.0).abs() < 1e-9);
    }
}

#[test]
fn synth_rejects_malformed_tranching() {
    let dir = tempfile::tempdir().unwrap();
    let bad_spec = dir.path().join("bad.toml");
    std::fs::write(
        &bad_spec,
        "maturity = 5.0\npayment_frequency = 4\nportfolio_spread = 0.03\ndiscount_rate = 0.05\n\n\
         [[tranches]]\nname = \"X\"\nattachment = 0.10\ndetachment = 0.10\ncoupon_spread = 0.01\n",
    )
    .unwrap();
    let out = dir.path().join("synth.csv");
    let output = run(&[
        "synth",
        "--spec",
        &bad_spec.display().to_string(),
        "--scenarios",
        &fixture("scenarios.csv"),
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(!out.exists());
}
