use std::fs;
use std::path::Path;
use std::process::Command;

use vkflow_cli::output::parse_snapshot;

const BIN: &str = env!("CARGO_BIN_EXE_vkflow");

const BASE: &str = r#"
format_version = "vkflow-manifest/1"
name = "case"

[grid]
n = 10

[physics]
U = 0.3
k = 1.0

[load]
amplitude = 20.0

[initial]
u0 = [{ m = 1, n = 1, amp = 0.2 }]

[time]
t_end = 0.3

[aero]
theta_n = 16
s_n = 16

[probes]
stride = 2
equilibria = true
flow_points = [[0.5, 0.5, 0.2]]
"#;

fn write_manifest(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("m.toml");
    fs::write(&p, text).unwrap();
    p
}

fn vkflow(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn simulate_zero_length_writes_header_and_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &BASE.replace("t_end = 0.3", "t_end = 0.0"));
    let out = vkflow(&["simulate", m.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("case.records.csv")).unwrap();
    assert!(csv.starts_with("# format_version: vkflow-manifest/1\n"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("t,step,e_pl"));
    assert!(rows[0].ends_with("flags,phi_0,phi_t_0"));
    assert_eq!(rows[1].split(',').count(), rows[0].split(',').count());
    // 17 significant digits
    assert!(rows[1].split(',').nth(2).unwrap().contains('.'));
    assert_eq!(rows[1].split(',').nth(2).unwrap().split('e').next().unwrap().len(), 18);

    let snap = fs::read_to_string(dir.path().join("case.snapshot.txt")).unwrap();
    assert!(snap.contains("\nnx ny x0 y0 Lx Ly t\n"));
    let (nx, ny, ext, t, values) = parse_snapshot(&snap).unwrap();
    assert_eq!((nx, ny, ext, t), (10, 10, [0.0, 0.0, 1.0, 1.0], 0.0));
    assert_eq!(values.len(), 100);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), BASE);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let st = vkflow(&["simulate", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        outputs.push((
            fs::read(out.join("case.records.csv")).unwrap(),
            fs::read(out.join("case.snapshot.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    // records at steps 0, 2, 4, ... plus the final step
    assert!(data_rows(&csv).len() > 3);
}

#[test]
fn one_by_one_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[sweep]\nk = [1.0]\n");
    let m = write_manifest(dir.path(), &text);
    let d = dir.path().to_str().unwrap();
    assert!(vkflow(&["simulate", m.to_str().unwrap(), "--out", d]).status.success());
    let st = vkflow(&["sweep", m.to_str().unwrap(), "--out", d, "--jobs", "2"]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for f in ["records.csv", "snapshot.txt"] {
        let a = fs::read(dir.path().join(format!("case.{f}"))).unwrap();
        let b = fs::read(dir.path().join(format!("case.cell0000.{f}"))).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let summary = fs::read_to_string(dir.path().join("case.summary.csv")).unwrap();
    let rows = data_rows(&summary);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("cell,U,k,beta,load_amplitude,verdict,final_distance,decay_rate"));
    assert!(rows[1].starts_with("0,"));
    assert!(rows[1].ends_with("\"ok\""));
}

#[test]
fn sweep_cells_match_their_own_simulations() {
    let dir = tempfile::tempdir().unwrap();
    let base = BASE.replace("t_end = 0.3", "t_end = 0.3\ndt = 0.04");
    let m = write_manifest(dir.path(), &format!("{base}\n[sweep]\nk = [0.5, 2.0]\nU = [0.1]\n"));
    let d = dir.path().join("sweep");
    let st = vkflow(&["sweep", m.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let rows = data_rows(&fs::read_to_string(d.join("case.summary.csv")).unwrap())
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    assert_eq!(rows.len(), 3);
    // cell 1 rerun alone with its physics fixed in the manifest
    let cell = base.replace("U = 0.3", "U = 0.1").replace("k = 1.0", "k = 2.0");
    let single = write_manifest(dir.path(), &format!("{cell}\n[sweep]\nk = [0.5, 2.0]\nU = [0.1]\n"));
    let s = dir.path().join("single");
    assert!(vkflow(&["simulate", single.to_str().unwrap(), "--out", s.to_str().unwrap()]).status.success());
    let a = fs::read_to_string(s.join("case.records.csv")).unwrap();
    let b = fs::read_to_string(d.join("case.cell0001.records.csv")).unwrap();
    assert_eq!(data_rows(&a), data_rows(&b));
}

#[test]
fn stationary_catalog_has_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), BASE);
    let st = vkflow(&["stationary", m.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let cat: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("case.catalog.json")).unwrap()).unwrap();
    assert_eq!(cat["format_version"], "vkflow-manifest/1");
    assert_eq!(cat["manifest"]["physics"]["U"], 0.3);
    let members = cat["members"].as_array().unwrap();
    assert_eq!(members.len(), 1);
    let m0 = &members[0];
    assert!(m0["residual_norm"].as_f64().unwrap() <= m0["certificate_tol"].as_f64().unwrap());
    let snap = fs::read_to_string(dir.path().join("case.eq0.txt")).unwrap();
    assert!(parse_snapshot(&snap).is_some());
}

#[test]
fn validation_error_exits_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &BASE.replace("U = 0.3", "U = 1.0"));
    let out = vkflow(&["simulate", m.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["exit_code"], 1);
    assert!(err["message"].as_str().unwrap().contains("subsonic only"));
    let missing = vkflow(&["simulate", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // far beyond the explicit stability bound
    let text = BASE
        .replace("t_end = 0.3", "t_end = 20.0\ndt = 0.3")
        .replace("amp = 0.2", "amp = 50.0")
        .replace("equilibria = true", "equilibria = false");
    let m = write_manifest(dir.path(), &text);
    let out = vkflow(&["simulate", m.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
    assert!(err["message"].as_str().unwrap().contains("non-finite"), "{err}");
    // the partial run is still on disk
    assert!(dir.path().join("case.records.csv").exists());
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("v.json");
    let out = vkflow(&["verify", "--quick", "--json", json.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")));
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert!(reports.as_array().unwrap().len() >= 10);
}
