//! Drives the fvx binary end to end: exit codes, artifact layout,
//! determinism, and the sweep tables.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fvx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fvx"))
        .args(args)
        .output()
        .expect("fvx runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn write_scalar_periodic(dir: &Path, mult: u32, nx: usize) -> PathBuf {
    let path = dir.join("periodic.json");
    let text = format!(
        r#"{{
  "class": "scalar_periodic",
  "scalar": {{"lambda": 1.0, "xi": 1.0, "a2": 0.5, "b2": 0.5}},
  "vortices": [{{"x": 3.141592653589793, "y": 3.141592653589793, "mult": {mult}}}],
  "grid": {{"lx": 6.283185307179586, "ly": 6.283185307179586, "nx": {nx}, "ny": {nx}}},
  "seed": 11
}}
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn write_scalar_planar(dir: &Path, nx: usize) -> PathBuf {
    let path = dir.join("planar.json");
    let text = format!(
        r#"{{
  "class": "scalar_planar",
  "scalar": {{"lambda": 1.0, "xi": 1.0, "a2": 0.5, "b2": 0.5}},
  "vortices": [{{"x": 0.0, "y": 0.0}}],
  "box": {{"l": 12.0, "nx": {nx}, "ny": {nx}}},
  "seed": 11
}}
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_errors_exit_two_and_help_exits_zero() {
    assert_eq!(code(&fvx(&["--help"])), 0);
    assert_eq!(code(&fvx(&["bogus"])), 2);
    assert_eq!(code(&fvx(&["solve"])), 2);
    // probe needs at least two starts, enforced at the flag level
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_periodic(dir.path(), 1, 32);
    let output = fvx(&["solve", config.to_str().unwrap(), "--probe", "1"]);
    assert_eq!(code(&output), 2);
}

#[test]
fn malformed_configs_exit_two_with_a_line_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"class\": \"scalar_periodic\",\n  \"scalar\": oops\n}\n").unwrap();
    let output = fvx(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("line 3"));

    let missing = dir.path().join("absent.json");
    let output = fvx(&["check", missing.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
}

#[test]
fn check_prints_the_budget_and_flags_violations() {
    let dir = tempfile::tempdir().unwrap();
    let feasible = write_scalar_periodic(dir.path(), 3, 32);
    let output = fvx(&["check", feasible.to_str().unwrap()]);
    assert_eq!(code(&output), 0);
    let text = stdout(&output);
    assert!(text.contains("feasibility: feasible"));
    assert!(text.contains("vortex_budget"));

    let infeasible = write_scalar_periodic(dir.path(), 4, 32);
    let output = fvx(&["check", infeasible.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
    let text = stdout(&output);
    assert!(text.contains("4\u{3c0}N/\u{3bb} \u{2265} \u{3be}|\u{3a9}|"));
    assert!(text.contains("50.265"));
    assert!(text.contains("39.478"));
}

#[test]
fn n_sweep_crosses_the_feasibility_boundary_sharply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_periodic(dir.path(), 1, 32);
    let output = fvx(&[
        "sweep",
        config.to_str().unwrap(),
        "--param",
        "n",
        "--values",
        "0,1,2,3,4,5,6",
    ]);
    assert_eq!(code(&output), 0);
    let text = stdout(&output);
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 7);
    for (n, row) in rows.iter().enumerate() {
        let expected = if n <= 3 { "converged" } else { "infeasible" };
        assert_eq!(row[1], expected, "row {n}");
        let slack: f64 = row[2].parse().unwrap();
        assert_eq!(slack > 0.0, n <= 3, "slack sign at row {n}");
    }
}

#[test]
fn solve_artifacts_are_deterministic_and_verify_accepts_them() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_periodic(dir.path(), 2, 48);
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let output = fvx(&[
            "solve",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    }
    for name in ["report.txt", "u1.vxf", "v1.vxf", "config.json", "profile.dat"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let report = std::fs::read_to_string(out1.join("report.txt")).unwrap();
    assert!(report.contains("residuals:"));
    assert!(report.contains("all_pass: true"));

    assert_eq!(code(&fvx(&["verify", out1.to_str().unwrap()])), 0);
    // a file inside the artifact directory names the same artifact set
    let by_file = out1.join("u1.vxf");
    assert_eq!(code(&fvx(&["verify", by_file.to_str().unwrap()])), 0);
}

#[test]
fn tampered_dumps_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_periodic(dir.path(), 2, 48);
    let out = dir.path().join("run");
    assert_eq!(
        code(&fvx(&[
            "solve",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])),
        0
    );
    let dump = out.join("u1.vxf");
    let mut field = fracvortex::io::read_field(&dump).unwrap();
    field.scale(1.05);
    fracvortex::io::write_field(&dump, &field).unwrap();
    let output = fvx(&["verify", out.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
    assert!(stdout(&output).contains("all_pass: false"));
}

#[test]
fn grid_override_changes_the_dump_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_periodic(dir.path(), 1, 48);
    let out = dir.path().join("run");
    let output = fvx(&[
        "solve",
        config.to_str().unwrap(),
        "--grid",
        "32",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let field = fracvortex::io::read_field(&out.join("u1.vxf")).unwrap();
    assert_eq!((field.grid().nx, field.grid().ny), (32, 32));
    // the written config carries the override, so verify sees one grid
    assert_eq!(code(&fvx(&["verify", out.to_str().unwrap()])), 0);
}

#[test]
fn the_u_field_does_not_depend_on_mu() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_planar(dir.path(), 63);
    let mut fields = Vec::new();
    for mu in ["0.5", "2"] {
        let out = dir.path().join(format!("mu{mu}"));
        let output = fvx(&[
            "solve",
            config.to_str().unwrap(),
            "--mu",
            mu,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
        fields.push(fracvortex::io::read_field(&out.join("u1.vxf")).unwrap());
    }
    // u solves a mu-free equation; only discretization error differs
    assert!(fields[0].linf_distance(&fields[1]) < 0.1);
}

#[test]
fn planar_grid_sweep_shrinks_the_flux_residual() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_planar(dir.path(), 63);
    let output = fvx(&[
        "sweep",
        config.to_str().unwrap(),
        "--param",
        "grid",
        "--values",
        "31,63,127",
    ]);
    assert_eq!(code(&output), 0);
    let text = stdout(&output);
    let residuals: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let cells: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(cells[1], "converged", "row: {l}");
            cells[4].parse().unwrap()
        })
        .collect();
    assert_eq!(residuals.len(), 3);
    assert!(residuals[0] > residuals[1] && residuals[1] > residuals[2], "{residuals:?}");
}

#[test]
fn exhausted_newton_budget_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stall.json");
    std::fs::write(
        &path,
        r#"{
  "class": "scalar_periodic",
  "scalar": {"lambda": 1.0, "xi": 1.0, "a2": 0.5, "b2": 0.5},
  "vortices": [{"x": 3.0, "y": 3.0, "mult": 2}],
  "grid": {"lx": 6.283185307179586, "ly": 6.283185307179586, "nx": 32, "ny": 32},
  "solver": {"max_newton": 1}
}
"#,
    )
    .unwrap();
    let output = fvx(&["solve", path.to_str().unwrap()]);
    assert_eq!(code(&output), 3);
    assert!(stderr(&output).contains("no convergence"));
}

#[test]
fn probe_results_land_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scalar_periodic(dir.path(), 2, 32);
    let out = dir.path().join("run");
    let output = fvx(&[
        "solve",
        config.to_str().unwrap(),
        "--probe",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("uniqueness:"));
    assert!(report.contains("k=2 seed=11 pass=true"));
}
