//! End-to-end tests of the `errstruct` binary: documented outputs, strict
//! config rejection, exit codes, and byte-level determinism of reports.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const NORMAL_LOCATION: &str = "\
model.family = normal-location
model.domain.lower = 0
model.domain.upper = 1
run.theta = 0.5
";

const PUNCTURED_SQUARE: &str = "\
model.family = normal-location
model.domain.lower = -1
model.domain.upper = 1
model.domain.exclude = 0
psi.named = square
";

fn run(dir: &TempDir, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_errstruct"))
        .args(args)
        .current_dir(dir.path())
        .env_remove("ERRSTRUCT_TOL")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).expect("config written");
    path
}

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).expect("report exists");
    serde_json::from_str(&text).expect("report is JSON")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn fisher_reports_unit_information_by_quadrature() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "normloc.cfg", NORMAL_LOCATION);
    let output = run(
        &dir,
        &[
            "fisher",
            "--config",
            config.to_str().unwrap(),
            "--out",
            "f.json",
        ],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let report = read_json(&dir.path().join("f.json"));
    let j = report["J"].as_f64().unwrap();
    assert!((j - 1.0).abs() < 1e-9, "J = {j}");
    assert_eq!(report["method"], "quadrature");
    assert_eq!(report["target"], "fisher-information");
}

#[test]
fn compare_bounds_is_strict_at_a_quarter() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "mixture.cfg", PUNCTURED_SQUARE);
    let output = run(
        &dir,
        &[
            "compare-bounds",
            "--config",
            config.to_str().unwrap(),
            "--a",
            "0.25",
            "--out",
            "cb.json",
        ],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let report = read_json(&dir.path().join("cb.json"));
    let gamma = report["gamma_psi"].as_f64().unwrap();
    let inv = report["inv_fisher_Q"].as_f64().unwrap();
    assert!((gamma - 1.0).abs() < 1e-9, "gamma_psi = {gamma}");
    assert!(inv > 1.0, "inv_fisher_Q = {inv}");
    assert_eq!(report["strict"], true);
}

#[test]
fn reports_are_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "sim.cfg",
        "\
model.family = normal-location
model.domain.lower = -2
model.domain.upper = 2
run.theta = 0.2
run.n = 200
run.reps = 200
run.seed = 7
",
    );
    let args = ["simulate", "--config", config.to_str().unwrap()];
    for (out, workers) in [("a.json", "1"), ("b.json", "3")] {
        let output = run(
            &dir,
            &[&args[..], &["--out", out, "--workers", workers]].concat(),
        );
        assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b, "same config and seed must give identical bytes");
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "typo.cfg",
        "model.family = normal-location\nmodel.domain.low = 0\n",
    );
    let output = run(&dir, &["fisher", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("model.domain.low"), "{stderr}");
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn unknown_family_lists_the_valid_ones() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "fam.cfg",
        "model.family = cauchy\nmodel.domain.lower = 0\nmodel.domain.upper = 1\n",
    );
    let output = run(&dir, &["fisher", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = stderr_of(&output);
    for family in ["logistic", "mixture", "normal-location", "normal-scale"] {
        assert!(stderr.contains(family), "{stderr}");
    }
}

#[test]
fn missing_model_block_names_the_key() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "empty.cfg", "run.theta = 0.5\n");
    let output = run(&dir, &["fisher", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr_of(&output).contains("model.family"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn divergent_prior_is_a_numerical_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "div.cfg",
        "model.family = normal-scale\nmodel.domain.lower = 0\nmodel.domain.upper = 1\n",
    );
    let output = run(&dir, &["jeffreys", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr_of(&output).contains("does not normalize"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn image_grid_in_csv_has_one_row_per_point() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "img.cfg",
        &format!("{PUNCTURED_SQUARE}run.grid = 5\n"),
    );
    let output = run(
        &dir,
        &[
            "image",
            "--config",
            config.to_str().unwrap(),
            "--format",
            "csv",
            "--out",
            "img.csv",
        ],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let text = std::fs::read_to_string(dir.path().join("img.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a,gamma");
    assert_eq!(lines.len(), 6);
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(
            (cells[1] - 4.0 * cells[0]).abs() < 1e-9,
            "field at {} is {}",
            cells[0],
            cells[1]
        );
    }
}

#[test]
fn jeffreys_grid_matches_the_scale_closed_form() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "scale.cfg",
        "\
model.family = normal-scale
model.domain.lower = 1
model.domain.upper = 2
run.grid = 8
",
    );
    let output = run(
        &dir,
        &[
            "jeffreys",
            "--config",
            config.to_str().unwrap(),
            "--out",
            "j.json",
        ],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let report = read_json(&dir.path().join("j.json"));
    let rows = report["grid"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let theta = row["theta"].as_f64().unwrap();
        let density = row["density"].as_f64().unwrap();
        let exact = 1.0 / (theta * 2f64.ln());
        assert!(
            (density - exact).abs() < 1e-6,
            "density at {theta} is {density}, closed form {exact}"
        );
    }
}

#[test]
fn crlb_median_risk_exceeds_the_information_bound() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "crlb.cfg",
        "\
model.family = normal-location
model.domain.lower = -2
model.domain.upper = 2
run.theta = 0.2
run.n = 400
run.reps = 300
run.seed = 9
run.estimator = median
",
    );
    let output = run(
        &dir,
        &[
            "crlb",
            "--config",
            config.to_str().unwrap(),
            "--out",
            "c.json",
        ],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let report = read_json(&dir.path().join("c.json"));
    assert_eq!(report["exceeds_bound"], true);
    let bound = report["bound"].as_f64().unwrap();
    assert!((bound - 1.0 / 400.0).abs() < 1e-12, "bound = {bound}");
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "seeded.cfg",
        "\
model.family = normal-location
model.domain.lower = -2
model.domain.upper = 2
run.theta = 0.2
run.n = 100
run.reps = 100
run.seed = 7
",
    );
    let args = ["simulate", "--config", config.to_str().unwrap()];
    let base = run(&dir, &[&args[..], &["--out", "base.json"]].concat());
    assert_eq!(base.status.code(), Some(0), "{}", stderr_of(&base));
    let over = run(
        &dir,
        &[&args[..], &["--out", "over.json", "--seed", "99"]].concat(),
    );
    assert_eq!(over.status.code(), Some(0), "{}", stderr_of(&over));
    let base = read_json(&dir.path().join("base.json"));
    let over = read_json(&dir.path().join("over.json"));
    assert_eq!(base["seed"].as_u64(), Some(7));
    assert_eq!(over["seed"].as_u64(), Some(99));
    assert_ne!(base["estimate"], over["estimate"]);
}

#[test]
fn malformed_tolerance_env_var_names_itself() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "normloc.cfg", NORMAL_LOCATION);
    let output = Command::new(env!("CARGO_BIN_EXE_errstruct"))
        .args(["fisher", "--config", config.to_str().unwrap()])
        .current_dir(dir.path())
        .env("ERRSTRUCT_TOL", "tight")
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr_of(&output).contains("ERRSTRUCT_TOL"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn product_without_second_model_names_the_key() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "half.cfg",
        "\
model.family = normal-location
model.domain.lower = 0
model.domain.upper = 1
run.theta = 0.5, 1.5
",
    );
    let output = run(&dir, &["product", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr_of(&output).contains("model2.family"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn product_reports_the_block_diagonal() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "pair.cfg",
        "\
model.family = normal-location
model.domain.lower = 0
model.domain.upper = 1
model2.family = normal-scale
model2.domain.lower = 1
model2.domain.upper = 2
run.theta = 0.5, 1.5
",
    );
    let output = run(
        &dir,
        &[
            "product",
            "--config",
            config.to_str().unwrap(),
            "--out",
            "p.json",
        ],
    );
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    let report = read_json(&dir.path().join("p.json"));
    let g00 = report["gamma_00"].as_f64().unwrap();
    let g11 = report["gamma_11"].as_f64().unwrap();
    assert!((g00 - 1.0).abs() < 1e-9, "gamma_00 = {g00}");
    assert!((g11 - 1.125).abs() < 1e-9, "gamma_11 = {g11}");
    assert_eq!(report["gamma_01"].as_f64(), Some(0.0));
}

#[test]
fn branch_list_map_matches_the_named_square() {
    let dir = TempDir::new().unwrap();
    let named = write_config(
        &dir,
        "named.cfg",
        &format!("{PUNCTURED_SQUARE}run.grid = 7\n"),
    );
    let spelled = write_config(
        &dir,
        "spelled.cfg",
        "\
model.family = normal-location
model.domain.lower = -1
model.domain.upper = 1
model.domain.exclude = 0
psi.branch.1.lower = -1
psi.branch.1.upper = 0
psi.branch.1.forward = theta^2
psi.branch.1.inverse = -sqrt(a)
psi.branch.1.derivative = 2*theta
psi.branch.2.lower = 0
psi.branch.2.upper = 1
psi.branch.2.forward = theta^2
psi.branch.2.inverse = sqrt(a)
psi.branch.2.derivative = 2*theta
run.grid = 7
",
    );
    for (config, out) in [(&named, "n.json"), (&spelled, "s.json")] {
        let output = run(
            &dir,
            &["image", "--config", config.to_str().unwrap(), "--out", out],
        );
        assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    }
    let named = read_json(&dir.path().join("n.json"));
    let spelled = read_json(&dir.path().join("s.json"));
    let named_rows = named["grid"].as_array().unwrap();
    let spelled_rows = spelled["grid"].as_array().unwrap();
    assert_eq!(named_rows.len(), spelled_rows.len());
    for (a, b) in named_rows.iter().zip(spelled_rows) {
        let ga = a["gamma"].as_f64().unwrap();
        let gb = b["gamma"].as_f64().unwrap();
        assert!((ga - gb).abs() < 1e-9, "named {ga} vs spelled {gb}");
    }
}
