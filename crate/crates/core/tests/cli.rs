//! End-to-end runs of the mems-cli binary and the persisted formats.

use std::fs;
use std::path::Path;
use std::process::Command;

use mems::galerkin::{solve_hyperbolic, InitialDatum, SolveConfig};
use mems::io::{format_trajectory, parse_trajectory, RunConfig};
use mems::spectrum::{build_grid, compute_spectrum, BoundaryCondition, OperatorSpec};
use proptest::prelude::*;

const CLI: &str = env!("CARGO_BIN_EXE_mems-cli");

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn small_config(command: &str, out: &Path) -> String {
    format!(
        r#"
command = "{command}"
output_dir = "{}"

[operator]
beta = 1.0
tau = 0.0
lambda = 0.5
bc = "navier"
dim_n = 1
domain = {{ kind = "interval", length = 1.0 }}

[numerics]
n = 64
k = 8
dt = 1e-3
t_final = 0.02

[initial]
u0 = {{ kind = "bump", amplitude = 0.02 }}
"#,
        out.display()
    )
}

#[test]
fn solve_run_writes_outputs_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &small_config("solve_parabolic", &out));
    let st = Command::new(CLI).arg("run").arg(&cfg).env_remove("MEMS_CACHE_DIR").status().unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["trajectory.txt", "series.csv", "summary.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn subcommand_overrides_the_file_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &small_config("solve_parabolic", &out));
    let st = Command::new(CLI).arg("spectrum").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("eigenvalues.csv").exists());
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let moved = tmp.path().join("moved");
    let cfg = write_config(tmp.path(), &small_config("spectrum", &out));
    let st = Command::new(CLI)
        .args(["spectrum", cfg.to_str().unwrap(), "--k", "4", "--output-dir", moved.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let csv = fs::read_to_string(moved.join("eigenvalues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn invalid_config_exits_two_with_a_field_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let body = small_config("solve_parabolic", &out).replace("dim_n = 1", "dim_n = 8").replace(
        r#"domain = { kind = "interval", length = 1.0 }"#,
        r#"domain = { kind = "radial_ball" }"#,
    );
    let cfg = write_config(tmp.path(), &body);
    let o = Command::new(CLI).arg("check").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n <= 7"));
}

#[test]
fn unknown_field_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let body = small_config("spectrum", &out).replace("[numerics]", "[numerics]\nbogus = 1");
    let cfg = write_config(tmp.path(), &body);
    let o = Command::new(CLI).arg("check").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_exits_two() {
    let o = Command::new(CLI).args(["check", "/nonexistent/run.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let body = small_config("certify", &out) + "\n[certify]\nmode = \"global\"\nr = 100.0\nrho = 0.0\nn_probes = 5\n";
    let cfg = write_config(tmp.path(), &body);
    let o = Command::new(CLI).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}

#[test]
fn config_round_trips_through_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let a = RunConfig::from_toml_str(&small_config("solve_hyperbolic", tmp.path())).unwrap();
    let b = RunConfig::from_toml_str(&a.to_toml_string().unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trajectory_text_round_trips_bit_exactly(
        coeffs in prop::collection::vec(-0.05f64..0.05, 8),
        vel in prop::collection::vec(-0.5f64..0.5, 8),
        lambda in 0.0f64..2.0,
    ) {
        let spec = OperatorSpec::interval(1.0, 0.3, lambda, BoundaryCondition::Navier).unwrap();
        let b = compute_spectrum(&spec, &build_grid(spec.domain(), 1, 64).unwrap(), 8).unwrap();
        let cfg = SolveConfig::new(spec, InitialDatum::Coefficients { values: coeffs }, 5e-3, 1e-3)
            .with_velocity(InitialDatum::Coefficients { values: vel });
        let t = solve_hyperbolic(&b, &cfg).unwrap();
        let text = format_trajectory(&t).unwrap();
        let back = parse_trajectory(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(format_trajectory(&back).unwrap(), text);
    }
}
