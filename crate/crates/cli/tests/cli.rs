use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn urnflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urnflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("URNFLOW_THREADS")
        .output()
        .expect("binary runs")
}

#[test]
fn out_of_range_phi_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = urnflow(&["simulate", "--set", "model.phi=1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("phi"));
}

#[test]
fn zero_step_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        urnflow(&["hydro", "--set", "dt=0"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn malformed_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"n_list": [16], "unknown": 1}"#).unwrap();
    let out = urnflow(&["moments", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_subset_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = urnflow(&["verify", "--set", "checks=8,9,11"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = fs::read_to_string(dir.path().join("verification.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS [")).count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verification.json")).unwrap())
            .unwrap();
    assert_eq!(json["pass"], true);
}

#[test]
fn config_file_and_overrides_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"model": {"preset": "bcpp", "lambda": "1", "b": "0.5", "phi": "0.5"}, "n_list": [4], "T": 0.5, "dt": 0.01}"#,
    )
    .unwrap();
    let out = urnflow(
        &[
            "moments",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "T=0.2",
            "--seed",
            "9",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eff: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("effective_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(eff["T"], 0.2);
    assert_eq!(eff["seed"], 9);
    assert_eq!(eff["model"]["preset"], "bcpp");
    let csv = fs::read_to_string(dir.path().join("moments_n4.csv")).unwrap();
    assert!(csv.starts_with("# generated_at="));
    assert!(csv.lines().nth(1).unwrap() == "time,i,j,F,Fhat,diff");
}

#[test]
fn deterministic_output_is_reproducible_across_thread_counts() {
    let args = [
        "--set",
        "n_list=8,16",
        "--set",
        "replicas=40",
        "--set",
        "grid=32",
        "--set",
        "dt=0.01",
        "--seed",
        "3",
        "--deterministic",
    ];
    for cmd in ["simulate", "hydro", "moments", "fluct"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut first = vec![cmd];
        first.extend(args);
        assert!(urnflow(&first, a.path()).status.success(), "{cmd}");
        let mut second = first.clone();
        second.extend(["--threads", "1"]);
        assert!(urnflow(&second, b.path()).status.success(), "{cmd}");
        let mut names: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| n.to_string_lossy().ends_with(".csv"))
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let x = fs::read(a.path().join(&name)).unwrap();
            let y = fs::read(b.path().join(&name)).unwrap();
            assert!(!x.starts_with(b"#"));
            assert_eq!(x, y, "{cmd}: {name:?} differs");
        }
    }
}
