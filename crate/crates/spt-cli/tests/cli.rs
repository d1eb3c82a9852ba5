//! End-to-end tests of the command-line interface: exit codes, output
//! layout and bit-exact reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning the binary")
}

fn write_model(dir: &Path, text: &str) -> String {
    let path = dir.join("model.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const FIG2: &str = r#"{"preset": "dirichlet", "d": 2, "a": 3.0, "b": 1.0, "sigma2": 0.1}"#;

#[test]
fn malformed_model_exits_with_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), r#"{"preset": "dirichlet", "d": 2, "b": 1.0}"#);
    let out = spt(&["lambda", "--model", &model, "--n", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("\"a\""),
        "stderr should name the key: {stderr}"
    );
}

#[test]
fn missing_model_file_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spt(
        &["lambda", "--model", "does-not-exist.json", "--n", "10"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn weights_grid_has_the_requested_rows_and_market_tracks_x() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), FIG2);
    let out = spt(
        &[
            "weights",
            "--model",
            &model,
            "--grid",
            "101",
            "--portfolio",
            "market,unconstrained,two-asset",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let market = fs::read_to_string(dir.path().join("weights_market.csv")).unwrap();
    let lines: Vec<&str> = market.lines().collect();
    assert!(lines[0].starts_with("# spt weights config_hash="));
    assert_eq!(lines[1], "x^1,x^2,pi^1,pi^2");
    assert_eq!(lines.len(), 2 + 101);
    for row in &lines[2..] {
        let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[0], v[2]);
        assert_eq!(v[1], v[3]);
    }
    // the two-asset file exists and its weights obey the closed cutoffs
    let two = fs::read_to_string(dir.path().join("weights_two-asset.csv")).unwrap();
    for row in two.lines().skip(2) {
        let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        if v[0] < 0.25 {
            assert_eq!(v[2], 1.0);
        }
        if v[0] > 0.75 {
            assert_eq!(v[2], 0.0);
        }
    }
}

#[test]
fn two_asset_portfolio_rejected_for_three_assets() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        dir.path(),
        r#"{"preset": "dirichlet", "d": 3, "a": 3.0, "b": 1.0, "sigma2": 0.1}"#,
    );
    let out = spt(
        &["weights", "--model", &model, "--portfolio", "two-asset"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), FIG2);
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        for pass in ["a", "b"] {
            let target = out_dir.join(pass);
            fs::create_dir_all(&target).unwrap();
            let args: Vec<String> = match sub {
                "lambda" => vec![
                    "lambda".into(),
                    "--model".into(),
                    model.clone(),
                    "--n".into(),
                    "20000".into(),
                    "--seed".into(),
                    "11".into(),
                    "--out".into(),
                    target.to_string_lossy().into_owned(),
                ],
                _ => vec![
                    "qp".into(),
                    "--model".into(),
                    model.clone(),
                    "--m-funcs".into(),
                    "8".into(),
                    "--k-planes".into(),
                    "10".into(),
                    "--n".into(),
                    "500".into(),
                    "--seed".into(),
                    "11".into(),
                    "--out".into(),
                    target.to_string_lossy().into_owned(),
                ],
            };
            let argv: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
            let out = spt(&argv, dir.path());
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
    };
    run("lambda");
    let a = fs::read(dir.path().join("lambda/a/lambda.json")).unwrap();
    let b = fs::read(dir.path().join("lambda/b/lambda.json")).unwrap();
    assert_eq!(a, b);
    run("qp");
    let a = fs::read(dir.path().join("qp/a/qp_bundle.json")).unwrap();
    let b = fs::read(dir.path().join("qp/b/qp_bundle.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn capcurve_defaults_produce_six_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = spt(&["capcurve", "--n-draws", "20"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("capcurve_"))
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "capcurve_a0.5_d500.csv",
            "capcurve_a0.5_d5000.csv",
            "capcurve_a1_d500.csv",
            "capcurve_a1_d5000.csv",
            "capcurve_a2_d500.csv",
            "capcurve_a2_d5000.csv",
        ]
    );
    // per-draw ranked weights decrease along each mean curve
    let text = fs::read_to_string(dir.path().join("capcurve_a1_d500.csv")).unwrap();
    let means: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(means.len(), 500);
    assert!(means.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn simulate_zero_horizon_yields_header_only_output() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), FIG2);
    let out = spt(
        &["simulate", "--model", &model, "--t", "0", "--dt", "0.001"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "expected metadata + header only: {text}");
}

#[test]
fn simulate_growth_column_is_terminal_log_wealth_over_time() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), FIG2);
    let out = spt(
        &[
            "simulate",
            "--model",
            &model,
            "--t",
            "5",
            "--dt",
            "0.001",
            "--stride",
            "100",
            "--portfolios",
            "unconstrained",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("path_meta.json")).unwrap())
            .unwrap();
    let growth = meta["result"]["growth"][0]["growth"].as_f64().unwrap();
    let t = last[0];
    let log_v = last[3];
    assert!((growth - log_v / t).abs() < 1e-12);
}

#[test]
fn qp_bundle_feeds_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), FIG2);
    let out = spt(
        &[
            "qp",
            "--model",
            &model,
            "--m-funcs",
            "6",
            "--k-planes",
            "8",
            "--n",
            "200",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = spt(
        &[
            "simulate",
            "--model",
            &model,
            "--t",
            "2",
            "--dt",
            "0.001",
            "--portfolios",
            "market,qp:qp_bundle.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("path.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("log_V_qp"));
}
