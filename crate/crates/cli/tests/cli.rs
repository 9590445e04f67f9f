use std::path::Path;
use std::process::{Command, Output};

use hyers_cli::scenario::PRESETS;
use hyers_cli::RunReport;
use hyers_core::algebra::Algebra;

fn hyers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyers")).args(args).output().unwrap()
}

fn preset_text(name: &str) -> &'static str {
    PRESETS.iter().find(|(n, _)| *n == name).unwrap().1
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn list_checks_prints_the_six_checks() {
    let out = hyers(&["list-checks"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().collect();
    assert_eq!(
        names,
        ["master_inequality", "stability_bound", "generalized_derivation", "leibniz", "star_preservation", "superstability"]
    );
}

#[test]
fn validate_rejects_divergent_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset_text("power_control").replace("[control]\nkind = \"power\"\nbeta = 0.1\np = 0.5", "[control]\nkind = \"power\"\nbeta = 0.1\np = 1.0");
    let path = write(dir.path(), "bad.toml", &text);
    let out = hyers(&["validate", &path]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("converges only for p < 1"), "{err}");
}

#[test]
fn validate_accepts_presets() {
    for (name, _) in PRESETS {
        let out = hyers(&["validate", &format!("@{name}")]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "broken.toml", "version = 1\nname = ");
    assert_eq!(hyers(&["run", &path]).status.code(), Some(2));
    let typo = write(dir.path(), "typo.toml", &preset_text("power_control").replace("[sampler]", "[sampler]\nsampels = 3"));
    assert_eq!(hyers(&["validate", &typo]).status.code(), Some(2));
    assert_eq!(hyers(&["run", "/nonexistent/scenario.toml"]).status.code(), Some(2));
    assert_eq!(hyers(&["run", "@no_such_preset"]).status.code(), Some(2));
}

#[test]
fn construction_errors_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset_text("power_control").replace("n = 2", "n = 9");
    let path = write(dir.path(), "big.toml", &text);
    let out_path = dir.path().join("report.json");
    let out = hyers(&["run", &path, "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn run_writes_report_and_render_shows_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("nested/power_control.json");
    let out = hyers(&["run", "@power_control", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report.schema, 1);
    assert!(report.passed);
    assert_eq!(report.checks.len(), report.scenario.checks.len());
    assert!(report.wall_time_seconds.is_none());

    let rendered = hyers(&["render", out_path.to_str().unwrap()]);
    assert!(rendered.status.success());
    let text = String::from_utf8(rendered.stdout).unwrap();
    for name in ["stability_bound", "generalized_derivation", "leibniz"] {
        let row = text.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(row.contains("PASS"), "{row}");
    }
    assert!(text.contains("observed") && text.contains("vs bound"));
}

#[test]
fn superstability_preset_fails_master_inequality() {
    let out = hyers(&["run", "@constant_control"]);
    assert_eq!(out.status.code(), Some(1));
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report.check("master_inequality").unwrap().passed);
    let probe = report.check("superstability").unwrap();
    assert!(probe.passed);
    assert!(probe.details["growth"]["slope"].as_f64().unwrap() >= 0.9);
}

#[test]
fn zero_perturbation_recovers_exact_map() {
    let text = preset_text("power_control")
        .replace("kind = \"power_noise\"\nbeta = 0.1\np = 0.5\nseed = 11", "kind = \"zero\"\nseed = 11")
        .replace("kind = \"power_noise\"\nbeta = 0.1\np = 0.5\nseed = 12", "kind = \"zero\"\nseed = 12");
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "zero.toml", &text);
    let out = hyers(&["run", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    // μ(a) = xa − ay: column for E11 is x·E11 − E11·y
    let x = [[1.0, 0.0], [0.5, -1.0], [0.0, 2.0], [-1.0, 0.0]];
    let y = [[0.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.25, 0.0]];
    let expected = [
        [x[0][0] - y[0][0], x[0][1] - y[0][1]],
        [-y[1][0], -y[1][1]],
        [x[2][0], x[2][1]],
        [0.0, 0.0],
    ];
    for (k, e) in expected.iter().enumerate() {
        let got = report.mu.matrix[k][0];
        assert!((got[0] - e[0]).abs() < 1e-15 && (got[1] - e[1]).abs() < 1e-15, "{k}: {got:?} vs {e:?}");
    }
    assert!(report.checks.iter().all(|c| c.passed));
}

#[test]
fn structure_constant_algebra_from_relative_file() {
    let dir = tempfile::tempdir().unwrap();
    let alg = Algebra::direct_sum(&Algebra::upper_triangular(2).unwrap(), &Algebra::upper_triangular(1).unwrap()).unwrap();
    write(dir.path(), "t2c.json", &alg.to_json().unwrap());
    let text = r#"
version = 1
name = "t2c"
seed = 2
checks = ["master_inequality", "stability_bound", "generalized_derivation", "leibniz"]

[algebra]
kind = "structure_constants"
file = "t2c.json"

[exact_map]
kind = "right_multiplier"
z = [[1.0, 0.0], [2.0, 1.0], [0.0, -1.0], [0.5, 0.0]]

[f_perturbation]
kind = "power_noise"
beta = 0.05
p = 0.25
seed = 3

[control]
kind = "power"
beta = 0.15
p = 0.25

[sampler]
samples = 100
slots = "additive"
"#;
    let path = write(dir.path(), "t2c.toml", text);
    let out = hyers(&["run", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.mu.matrix.len(), 4);
    assert!(report.delta.routes_agree);
}

#[test]
fn star_check_requires_cstar_algebra() {
    let dir = tempfile::tempdir().unwrap();
    let alg = Algebra::upper_triangular(2).unwrap();
    write(dir.path(), "t2.json", &alg.to_json().unwrap());
    let text = preset_text("star_inner")
        .replace("kind = \"matrix\"\nn = 2", "kind = \"structure_constants\"\nfile = \"t2.json\"")
        .replace(
            "x = [[0.0, 1.0], [1.0, 0.5], [-1.0, 0.5], [0.0, -2.0]]\ny = [[0.0, 1.0], [1.0, 0.5], [-1.0, 0.5], [0.0, -2.0]]",
            "x = [[0.0, 1.0], [1.0, 0.5], [0.0, -2.0]]\ny = [[0.0, 1.0], [1.0, 0.5], [0.0, -2.0]]",
        );
    let path = write(dir.path(), "t2star.toml", &text);
    let out = hyers(&["validate", &path]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C*-algebra"));
}

#[test]
fn seed_override_changes_samples_only() {
    let a = hyers(&["run", "@power_control"]);
    let b = hyers(&["run", "@power_control", "--seed", "99"]);
    let ra: RunReport = serde_json::from_slice(&a.stdout).unwrap();
    let rb: RunReport = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(rb.scenario.seed, 99);
    assert_eq!(ra.mu, rb.mu);
    assert_ne!(ra.checks[0].report.witness, rb.checks[0].report.witness);
}

#[test]
fn timing_is_opt_in() {
    let out = hyers(&["run", "@power_control", "--timing"]);
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.wall_time_seconds.is_some());
}

#[test]
fn scenario_output_key_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset_text("power_control").replace("seed = 7\n", "seed = 7\noutput = \"out/report.json\"\n");
    let path = write(dir.path(), "with_output.toml", &text);
    // relative output paths resolve against the working directory
    let out = Command::new(env!("CARGO_BIN_EXE_hyers")).args(["run", &path]).current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn thread_count_does_not_change_report_bytes() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_hyers"))
            .args(["run", "@power_control"])
            .env(hyers_cli::THREADS_ENV, threads)
            .output()
            .unwrap()
            .stdout
    };
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("4"));
}
