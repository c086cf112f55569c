//! End-to-end checks of the batch commands: exit codes, validation
//! messages, artifact layout and rerun idempotence.

use std::path::Path;
use std::process::{Command, Output};

fn nrd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nrd"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn base_config() -> String {
    r#"
[grid]
dim = 1
extents = [2.0]
counts = [81]

[kernel]
shape = "gaussian"
epsilon = 1.0

[reaction]
name = "gray_scott"
a = 0.25
b = 0.080

[modes]
kinds = ["nonlocal", "nonlocal"]
diffusivity = [0.1, 0.01]

[initial]
profile = "gaussian_bump"
width = 0.1
amplitude = [1.0, 0.5]

[solver]
t_end = 0.2
dt = 0.01
"#
    .to_string()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

#[test]
fn simulate_completes_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, &base_config());
    let out_dir = dir.path().join("out");
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for file in ["diagnostics.csv", "snapshot_final.csv", "report.txt"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("termination: completed"));
    assert!(report.contains("(default)"), "defaults not echoed");
}

#[test]
fn negative_diffusivity_is_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &base_config().replace("diffusivity = [0.1, 0.01]", "diffusivity = [-0.1, 0.01]"),
    );
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(
        err.contains("modes.diffusivity[0]"),
        "message does not name the field: {err}"
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, &(base_config() + "\n[solver2]\nx = 1\n"));
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg2 = dir.path().join("run2.toml");
    write(&cfg2, &base_config().replace("t_end = 0.2", "t_end = 0.2\ntypo_key = 1"));
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg2)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn malformed_toml_reports_line_anchored_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[grid\ndim = 1\n");
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("line 1"), "no line anchor in: {err}");
}

#[test]
fn broken_field_with_audit_enabled_exits_3_before_stepping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
[grid]
dim = 1
extents = [2.0]
counts = [81]

[kernel]
shape = "gaussian"
epsilon = 1.0

[reaction]
name = "custom"
m = 2
monomials = [{ component = 0, coeff = -1.0, exponents = [0, 0] }]

[modes]
kinds = ["nonlocal", "nonlocal"]
diffusivity = [0.1, 0.01]

[initial]
profile = "constant"
value = [1.0, 1.0]

[solver]
t_end = 0.5
dt = 0.01

[audit]
enabled = true
"#,
    );
    let out_dir = dir.path().join("out");
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("quasi-positivity: FAIL"));
    assert!(report.contains("not started"));
    assert!(!out_dir.join("diagnostics.csv").exists(), "stepping ran anyway");
}

#[test]
fn audit_command_passes_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, &base_config());
    let out = nrd()
        .args(["audit", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
}

#[test]
fn rerun_produces_bitwise_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, &base_config());
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    for out_dir in [&out1, &out2] {
        let out = nrd()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }
    for file in ["diagnostics.csv", "snapshot_final.csv", "snapshot_000000.csv"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn override_flag_changes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, &base_config());
    let out_dir = dir.path().join("out");
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--override", "solver.dt=0.005", "--override", "reaction.a=0.3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("solver.dt = 0.005"), "{report}");
    assert!(report.contains("dt: 5e-3"));
}

#[test]
fn difflimit_writes_table_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
[grid]
dim = 1
extents = [2.0]
counts = [81]

[kernel]
shape = "bump"
normalization = "unit_mass"

[reaction]
name = "zero"
m = 1

[modes]
kinds = ["nonlocal"]
diffusivity = [0.5]

[initial]
profile = "gaussian_bump"
width = 0.2
amplitude = [1.0]

[solver]
t_end = 0.3

[experiment]
j_list = [2, 4, 8]
"#,
    );
    let out_dir = dir.path().join("out");
    let out = nrd()
        .args(["difflimit", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for file in [
        "convergence_table.csv",
        "table.md",
        "snapshot_local.csv",
        "snapshot_j2.csv",
        "snapshot_j8.csv",
        "report.txt",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let table = std::fs::read_to_string(out_dir.join("convergence_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "j,eps,l2_diff_u1,linf_diff_u1,node0_u1,node1_u1,node2_u1,node3_u1,node4_u1"
    );
    assert_eq!(table.lines().count(), 4);
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("fitted order"));
}

#[test]
fn compare_puts_smoothness_series_in_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mk = |kinds: &str| {
        format!(
            r#"
[grid]
dim = 1
extents = [2.0]
counts = [60]

[kernel]
shape = "gaussian"
epsilon = 1.0

[reaction]
name = "mol_demo"

[modes]
kinds = {kinds}
diffusivity = [0.1, 0.01]

[initial]
profile = "gaussian_bump"
width = 0.1
amplitude = [0.5, 0.5]

[solver]
scheme = "implicit_bdf2"
t_end = 0.5
dt = 0.01
snapshot_stride = 10
"#
        )
    };
    let cfg_a = dir.path().join("a.toml");
    let cfg_b = dir.path().join("b.toml");
    write(&cfg_a, &mk("[\"nonlocal\", \"nonlocal\"]"));
    write(&cfg_b, &mk("[\"nonlocal\", \"local\"]"));
    let out_dir = dir.path().join("out");
    let out = nrd()
        .args(["compare", "--config"])
        .arg(&cfg_a)
        .arg("--config-b")
        .arg(&cfg_b)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let csv = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert!(csv.starts_with("t,h1_a_u1,h1_b_u1,h1_a_u2,h1_b_u2"));
    assert!(out_dir.join("final_a.csv").exists());
    assert!(out_dir.join("final_b.csv").exists());
}

#[test]
fn runtime_termination_exits_1_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    // Negative-drift custom field pushes the state negative quickly.
    write(
        &cfg,
        r#"
[grid]
dim = 1
extents = [1.0]
counts = [41]

[kernel]
shape = "gaussian"
epsilon = 0.5

[reaction]
name = "custom"
m = 1
monomials = [{ component = 0, coeff = -1.0, exponents = [0] }]

[modes]
kinds = ["nonlocal"]
diffusivity = [0.1]

[initial]
profile = "constant"
value = [0.05]

[solver]
t_end = 5.0
dt = 0.1
"#,
    );
    let out_dir = dir.path().join("out");
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("negativity"), "{report}");
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, &base_config());
    let env_out = dir.path().join("env-out");
    let out = nrd()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("NRD_OUT_DIR", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(env_out.join("report.txt").exists());
}
