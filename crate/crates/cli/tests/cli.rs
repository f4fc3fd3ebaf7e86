use std::process::Command;

fn qsrf() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qsrf"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn generate_then_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = qsrf().args(["gen-synthetic", "--out"]).arg(&data).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["interactions.tsv", "icm.tsv", "config.txt"] {
        assert!(data.join(f).exists());
    }
    let res = dir.path().join("res");
    let out = qsrf()
        .arg("run")
        .arg("--config")
        .arg(data.join("config.txt"))
        .args([
            "--repeats",
            "2",
            "--qaoa-iters",
            "3",
            "--qaoa-qubits",
            "8",
            "--clusters",
            "6",
        ])
        .args([
            "--set",
            "rounds=1",
            "--set",
            "trees=5",
            "--set",
            "dict_epochs=1",
            "--out",
        ])
        .arg(&res)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("repeat 1"));
    assert!(stdout.contains("AUC: "));
    let metrics = std::fs::read_to_string(res.join("metrics.json")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let snap = std::fs::read_to_string(res.join("config.txt")).unwrap();
    assert!(snap.contains("qaoa_iters = 3"));
}

#[test]
fn oracle_reports_instances() {
    let out = qsrf()
        .args(["oracle-qubo", "--n", "6", "--k", "2", "--instances", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("within 1%: "));
}

#[test]
fn rejects_unknown_key() {
    let out = qsrf().args(["run", "--set", "bogus=1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
