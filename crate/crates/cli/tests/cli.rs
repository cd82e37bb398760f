use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ardnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ardnet"))
        .args(args)
        .output()
        .expect("spawn ardnet")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Simulates a design1 network and writes its ARD, returning the psi0 path.
fn observed_ard(dir: &TempDir) -> String {
    let net = path(dir, "net.json");
    let psi = path(dir, "psi0.json");
    let o = ardnet(&["simulate-network", "--seed", "3", "--out", &net]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = ardnet(&["compute-ard", "--network", &net, "--out", &psi]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    psi
}

#[test]
fn simulate_network_is_seed_deterministic() {
    let a = ardnet(&["simulate-network", "--seed", "11", "--sweeps", "20"]);
    let b = ardnet(&["simulate-network", "--seed", "11", "--sweeps", "20"]);
    let c = ardnet(&["simulate-network", "--seed", "12", "--sweeps", "20"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn meanfield_reports_exact_value_for_small_n() {
    let o = ardnet(&["meanfield", "--preset", "example2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mf = v["log_c_mf"].as_f64().unwrap();
    let exact = v["log_c_exact"].as_f64().unwrap();
    // No indirect term in this model: the bound is tight.
    assert!((mf - exact).abs() < 1e-8, "{mf} vs {exact}");

    let o = ardnet(&["meanfield", "--n", "15"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["log_c_exact"].is_null());
}

#[test]
fn estimate_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let psi = observed_ard(&dir);
    let args = |out: &str| {
        vec![
            "estimate".to_owned(),
            "--psi0".into(),
            psi.clone(),
            "--rounds".into(),
            "4".into(),
            "--draws".into(),
            "10".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            out.to_owned(),
        ]
    };
    for out in ["a", "b"] {
        let a = args(&path(&dir, out));
        let o = ardnet(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.csv", "summary.json"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    let trace = String::from_utf8(read(dir.path().join("a/trace.csv"))).unwrap();
    assert_eq!(trace.lines().count(), 1 + 40);
}

#[test]
fn run_experiment_artifacts_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |out: &str| {
        let o = ardnet(&[
            "run-experiment",
            "--desk",
            "--replications",
            "1",
            "--rounds",
            "6",
            "--draws",
            "20",
            "--seed",
            "21",
            "--out",
            out,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    assert_eq!(run(&a), run(&b));
    for f in ["summary.json", "ci_table.md", "rep_0/trace.csv", "rep_0/plot_data.csv", "rep_0/truth.json"] {
        assert_eq!(read(Path::new(&a).join(f)), read(Path::new(&b).join(f)), "{f}");
    }
    let plot = String::from_utf8(read(Path::new(&a).join("rep_0/plot_data.csv"))).unwrap();
    assert_eq!(plot.lines().count(), 1 + 6 * 20);

    let summary: serde_json::Value = serde_json::from_slice(&read(Path::new(&a).join("summary.json"))).unwrap();
    assert_eq!(summary["seed"], 21);
    assert!(summary["config"].is_object());
    let manifest: serde_json::Value = serde_json::from_slice(&read(Path::new(&a).join("manifest.json"))).unwrap();
    assert!(manifest["created_unix"].is_u64());
}

#[test]
fn oracle_validate_emits_passing_json() {
    let o = ardnet(&["oracle-validate", "--suite", "sufficiency", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let report = &v[0];
    assert_eq!(report["suite"], "sufficiency");
    assert_eq!(report["passed"], true);
    for c in report["checks"].as_array().unwrap() {
        assert!(c["measured"].as_f64().unwrap() < c["tolerance"].as_f64().unwrap());
    }
}

#[test]
fn exported_query_set_round_trips() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "q.json");
    let o = ardnet(&["export-queries", "design2-augmented", "--out", &file]);
    assert_eq!(code(&o), 0);
    let net = path(&dir, "net.json");
    let o = ardnet(&["simulate-network", "--preset", "design2", "--sweeps", "30", "--out", &net]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let builtin = ardnet(&["compute-ard", "--preset", "design2", "--queries", "design2-augmented", "--network", &net]);
    let from_file = ardnet(&["compute-ard", "--preset", "design2", "--queries", &file, "--network", &net]);
    assert_eq!(code(&builtin), 0);
    assert_eq!(builtin.stdout, from_file.stdout);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&ardnet(&["--help"])), 0);
    assert_eq!(code(&ardnet(&["no-such-command"])), 1);
    assert_eq!(code(&ardnet(&["run-experiment", "--preset", "nope", "--out", &path(&dir, "x")])), 1);
    assert_eq!(code(&ardnet(&["compute-ard", "--network", &path(&dir, "missing.json")])), 1);
    assert_eq!(code(&ardnet(&["oracle-validate", "--suite", "bogus"])), 1);
    assert_eq!(code(&ardnet(&["export-queries", "bogus"])), 1);

    fs::write(dir.path().join("bad.json"), "{\"n\": 15, \"unknown_field\": 1}").unwrap();
    let o = ardnet(&["simulate-network", "--config", &path(&dir, "bad.json")]);
    assert_eq!(code(&o), 1);

    // A wrong-sized network is a validation failure.
    let net = path(&dir, "net.json");
    assert_eq!(code(&ardnet(&["simulate-network", "--n", "6", "--sweeps", "5", "--out", &net])), 0);
    assert_eq!(code(&ardnet(&["compute-ard", "--network", &net])), 1);

    // An unreachable tolerance is a runtime failure.
    let psi = observed_ard(&dir);
    let o = ardnet(&[
        "estimate", "--psi0", &psi, "--rounds", "2", "--draws", "5", "--delta0", "0.01", "--out",
        &path(&dir, "est"),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no network within tolerance"));
}
