use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn cli(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointer-sim"))
        .args(&args[..1])
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap()
}

const PHASE: &str = r#"
[system]
hamiltonian = [[0.5, 0.0], [0.0, -0.5]]
initial_state = [0.7071067811865476, 0.7071067811865476]
[environment]
kind = "trivial"
[interaction]
mode = "phase"
system_operator = [[1.0, 0.0], [0.0, -1.0]]
coupling = { kind = "constant", value = 1.0 }
[time]
t_end = 20.0
steps = 40
"#;

#[test]
fn validate_reports_non_demolition_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = cli(&["validate"], &scenario("perturbed.toml"), &out);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["non_demolition"]["pass"], false);
    assert_eq!(s["metadata"]["command"], "validate");
    assert_eq!(s["metadata"]["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_keys_are_validation_errors_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", &PHASE.replace("[time]", "[time]\nstep_size = 0.1"));
    let out = tmp.path().join("o");
    let o = cli(&["run"], &bad, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step_size"));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn missing_scenario_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cli(&["run"], &tmp.path().join("absent.toml"), &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oversized_environment_is_a_capacity_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pointer-sim"))
        .args(["validate", "--scenario"])
        .arg(scenario("bath-3qubit.toml"))
        .arg("--out")
        .arg(tmp.path().join("o"))
        .env("POINTER_SIM_MAX_DIM", "8")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn coarse_theta_profile_is_a_resolution_error() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "coarse.toml", &format!("{PHASE}\n[theta]\nnodes = 8\n"));
    let out = tmp.path().join("o");
    let o = cli(&["saddle-compare"], &sc, &out);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes"));
    assert!(!out.join("saddle_vs_quadrature.csv").exists());
}

#[test]
fn windows_off_the_grid_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "w.toml", &format!("{PHASE}\n[analysis]\nwindows = [0.3]\n"));
    let o = cli(&["orthogonality"], &sc, &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("analysis.windows[0]"));
}

#[test]
fn sweep_without_axes_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cli(&["sweep"], &scenario("phase-minimal.toml"), &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_with_every_row_failing_exits_five() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(
        tmp.path(),
        "s.toml",
        &format!("{PHASE}\n[[sweep.axes]]\nkey = \"time.steps\"\nvalues = [0, -1]\n"),
    );
    let out = tmp.path().join("o");
    let o = cli(&["sweep"], &sc, &out);
    assert_eq!(o.status.code(), Some(5));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains("error: ")).count(), 2);
}

#[test]
fn sweep_rows_follow_the_axis_product() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = cli(&["sweep"], &scenario("bath-3qubit.toml"), &out);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("0,0.05,0.0,ok,"));
    assert!(rows[5].starts_with("5,0.2,0.7853981633974483,ok,"));
}

#[test]
fn overrides_change_the_result_and_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(cli(&["run"], &scenario("phase-minimal.toml"), &a).status.code(), Some(0));
    let o = cli(&["run", "--set", "interaction.coupling.value=0.5"], &scenario("phase-minimal.toml"), &b);
    assert_eq!(o.status.code(), Some(0));
    let (sa, sb) = (summary(&a), summary(&b));
    assert_eq!(sa["final"]["lambda_up"], 20.0);
    assert_eq!(sb["final"]["lambda_up"], 10.0);
    assert_ne!(sa["metadata"]["input_sha256"], sb["metadata"]["input_sha256"]);
    assert_eq!(sb["metadata"]["overrides"][0], "interaction.coupling.value=0.5");
}

#[test]
fn malformed_override_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cli(&["run", "--set", "no-equals-sign"], &scenario("phase-minimal.toml"), &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["branches", "saddle-compare", "sweep"] {
        let (a, b) = (tmp.path().join(format!("{cmd}1")), tmp.path().join(format!("{cmd}4")));
        cli(&[cmd, "--workers", "1"], &scenario("bath-3qubit.toml"), &a);
        cli(&[cmd, "--workers", "4"], &scenario("bath-3qubit.toml"), &b);
        for e in std::fs::read_dir(&a).unwrap() {
            let name = e.unwrap().file_name();
            assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{cmd}");
        }
    }
}

#[test]
fn csv_files_carry_a_schema_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    cli(&["decoherence"], &scenario("phase-minimal.toml"), &out);
    let text = std::fs::read_to_string(out.join("decoherence.csv")).unwrap();
    let mut lines = text.lines();
    let schema = lines.next().unwrap();
    let header = lines.next().unwrap();
    assert_eq!(schema, "# schema: t:f64,r_re:f64,r_im:f64,average_re:f64,average_im:f64,average_abs:f64,coherence_abs:f64");
    assert_eq!(header.split(',').count(), 7);
    assert_eq!(lines.count(), 401);
}
