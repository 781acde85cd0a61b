use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_obstacle-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn help_lists_every_subcommand() {
    let out = ok(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["run", "solve", "analyze", "extract", "synthetic", "convergence"] {
        assert!(text.contains(cmd), "missing {cmd} in\n{text}");
    }
}

#[test]
fn synthetic_then_analyze_and_extract() {
    let tmp = tempfile::tempdir().unwrap();
    let field = tmp.path().join("syn.olf");
    let f = field.to_str().unwrap();
    ok(&["synthetic", "--m", "40", "--half-width", "1.25", "--nodes", "513", "--out", f]);
    assert!(field.exists());

    let out_dir = tmp.path().join("analysis");
    let out = ok(&["--jobs", "1", "analyze", "--field", f, "--levels", "2", "--out", out_dir.to_str().unwrap()]);
    let report = json(&out);
    assert_eq!(report["verdict"]["supercharacteristic_growth"], true);
    assert_eq!(
        first_line(&out_dir.join("levels.csv")),
        "level,r,S_over_r2,tau,phi,dphi,discrepancy,discrepancy_shape,envelope"
    );
    assert_eq!(
        first_line(&out_dir.join("projection.csv")),
        "r,a,b,tau,phi,remainder_sup,remainder_grad"
    );
    let on_disk: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);

    let csv = tmp.path().join("branches.csv");
    ok(&[
        "extract", "--field", f, "--center", "0,0", "--inner", "0.1", "--outer", "0.6", "--out",
        csv.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("branch_id,x,y"));
    let ids: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 4);
}

#[test]
fn synthetic_rejects_bad_node_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["synthetic", "--m", "3", "--nodes", "100", "--out", tmp.path().join("x.olf").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));
}

#[test]
fn solve_writes_field_and_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("solve.json");
    fs::write(
        &cfg,
        r#"{"grid": {"half_width": 1, "nodes": 129}, "boundary": {"type": "constant", "value": 0}}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("solved");
    let out = ok(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    let diag = json(&out);
    assert!(diag["equation_residual"].as_f64().unwrap() <= 1e-6);
    assert!(out_dir.join("field.olf").exists());
    let on_disk: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(on_disk, diag);
}

fn write_spec(dir: &Path, name: &str, nodes: usize, levels: usize) -> String {
    let path = dir.join(format!("{name}.json"));
    fs::write(
        &path,
        format!(
            r#"{{"version": 1, "name": "{name}", "grid": {{"half_width": 1.25, "nodes": {nodes}}},
                "scenario": {{"type": "synthetic", "m": 30}}, "analysis": {{"levels": {levels}}},
                "output": "{name}-out"}}"#
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_is_deterministic_and_refuses_deep_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "syn", 513, 2);
    let summary = json(&ok(&["run", &spec]));
    assert_eq!(summary["verdict"]["class"], "supercharacteristic");
    let out_dir = tmp.path().join("syn-out");
    let first: Vec<(String, Vec<u8>)> = {
        let mut v: Vec<_> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    ok(&["--jobs", "2", "run", &spec]);
    for (name, bytes) in &first {
        assert_eq!(&fs::read(out_dir.join(name)).unwrap(), bytes, "{name} differs between runs");
    }

    let deep = write_spec(tmp.path(), "deep", 129, 6);
    let out = run(&["run", &deep]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("validate"), "{err}");
    assert!(!tmp.path().join("deep-out").exists());
    assert!(!tmp.path().join(".deep-out.partial").exists());
}

#[test]
fn convergence_writes_its_table() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "conv", 65, 1);
    let csv = tmp.path().join("conv.csv");
    let out = ok(&["convergence", &spec, "--quantity", "z-residual", "--out", csv.to_str().unwrap()]);
    let table = json(&out);
    assert_eq!(table["quantity"], "z-residual");
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
    assert_eq!(first_line(&csv), "h,nodes,error,order");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
}

#[test]
fn zero_jobs_is_a_usage_error() {
    let out = run(&["--jobs", "0", "synthetic", "--potential", "--nodes", "5", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}
