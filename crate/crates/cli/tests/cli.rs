use std::path::Path;
use std::process::{Command, Output};

fn gla(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gla"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GLA_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn missing_seed_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gla(&["table1", "--steps", "1000"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn aggregated_report_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = gla(&["table1", "--gamma", "-1", "--batches", "1", "--scheme", "rk4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["gamma", "batches", "scheme", "seed"] {
        assert!(err.contains(&format!("- {key}")), "{key} missing from {err}");
    }
}

#[test]
fn malformed_json_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(&file, "{\n  \"seed\": 1,\n  \"gamma\": ,\n}").unwrap();
    let out = gla(&["tv-curve", "--config", file.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cfg.json");
    std::fs::write(&file, r#"{"scheme": "euler", "levels": 2, "output": "from-file.csv"}"#).unwrap();
    let out = gla(&["tv-curve", "--config", file.to_str().unwrap(), "--scheme", "verlet"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = data_lines(&dir.path().join("from-file.csv"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.starts_with("verlet,")));
}

#[test]
fn tv_curve_reports_second_order_for_verlet() {
    let dir = tempfile::tempdir().unwrap();
    let out = gla(&["tv-curve", "--scheme", "verlet", "--output", "tv.csv"], dir.path());
    assert!(out.status.success());
    let lines = data_lines(&dir.path().join("tv.csv"));
    assert!(lines[0].starts_with("scheme,h,tv,observed_order"));
    for line in &lines[2..] {
        let order: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((order - 2.0).abs() < 0.1, "{line}");
    }
}

#[test]
fn harmonic_covariance_reports_both_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let out = gla(&["harmonic-covariance", "--scheme", "neri4", "--seed", "4", "--steps", "400000"], dir.path());
    assert!(out.status.success());
    let lines = data_lines(&dir.path().join("harmonic-covariance.csv"));
    let head: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<f64> = lines[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    let col = |name: &str| row[head.iter().position(|h| *h == name).unwrap() - 1];
    assert!((col("lyapunov_qq") - col("mc_qq")).abs() <= 4.0 * col("mc_qq_stderr"));
    assert!((col("lyapunov_pp") - col("mc_pp")).abs() <= 4.0 * col("mc_pp_stderr"));
}

#[test]
fn sample_thins_by_stride() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sample", "--scheme", "verlet", "--potential", "double-well", "--seed", "2", "--steps", "1000", "--stride", "100"];
    assert!(gla(&args, dir.path()).status.success());
    let lines = data_lines(&dir.path().join("sample.csv"));
    assert_eq!(lines.len(), 1 + 1000 / 100);
    assert!(lines.last().unwrap().starts_with("1000,"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gla"))
        .args(["energy-order", "--scheme", "neri4"])
        .current_dir(dir.path())
        .env("GLA_OUTPUT_DIR", dir.path().join("results"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(data_lines(&dir.path().join("results/energy-order.csv")).len(), 5);
}

#[test]
fn divergence_exits_three_and_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    // Symplectic Euler on the unit oscillator is unstable beyond h = 2.
    let args = ["sample", "--scheme", "euler", "--h0", "3", "--gamma", "0.01", "--seed", "1", "--steps", "100000"];
    let out = gla(&args, dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scheme euler") && err.contains("step"), "{err}");
    let lines = data_lines(&dir.path().join("sample.csv"));
    assert!(lines.len() > 1 && lines.len() < 100_001);
}

#[test]
fn unstable_linear_recursion_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = gla(&["tv-curve", "--scheme", "euler", "--h0", "2.5", "--gamma", "0.01", "--levels", "1"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}
