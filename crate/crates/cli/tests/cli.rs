use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const WEIGHTED: &str = r#"{
    "space": {"kind": "lp", "p": 2.0, "dim": 64},
    "operator": {"gallery": {"name": "weighted_shift_lp"}},
    "horizon": 12
}"#;

const BLOCK: &str = r#"{
    "space": {"kind": "lp", "p": 2.0, "dim": 20300},
    "operator": {"gallery": {"name": "block_shift_S"}},
    "horizon": 200,
    "construct": {
        "alpha": {"rule": "power", "c": 0.1, "exponent": 0.35, "len": 200},
        "tail": {"model": "finite"},
        "rho_q": 1.5
    }
}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_orbitlab")).args(args).arg("--config").arg(&cfg).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn verify_weighted_shift_passes_and_writes_csv() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), WEIGHTED, &["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("kind,claim,predicted,computed,margin,pass"));
    assert!(!csv.contains(",false"));
    assert!(out.join("provenance.json").exists());
    assert!(out.join("curves/norms.dat").exists());
}

#[test]
fn scan_on_block_shift_flags_growth_below_p_only() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(tmp.path(), BLOCK, &["scan", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let flags: Vec<(f64, bool)> = json["scans"][0]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["q"].as_f64().unwrap(), r["growing"].as_bool().unwrap()))
        .collect();
    assert_eq!(flags, vec![(1.5, true), (2.0, false), (2.5, false)]);
    assert!(out.join("curves/partial_sums_q1.5.dat").exists());
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for bad in [
        "{ not json",
        r#"{"space": {"kind": "lp", "p": 2.0, "dim": 8}, "operator": {"gallery": {"name": "nope"}}, "horizon": 4}"#,
        r#"{"space": {"kind": "lp", "p": 0.5, "dim": 8}, "operator": {"gallery": {"name": "c0_fixed"}}, "horizon": 4}"#,
        r#"{"space": {"kind": "lp", "p": 2.0, "dim": 8}, "operator": {"gallery": {"name": "c0_fixed"}}, "horizon": 4, "extra": 1}"#,
    ] {
        let o = run(tmp.path(), bad, &["orbit", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{bad}");
        assert!(!out.exists(), "{bad}");
    }
    let o = run(tmp.path(), WEIGHTED, &["orbit", "--set", "horizon=0", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn numerical_error_exits_1_with_error_code() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    // harmonic thresholds never reach ε² = 1/16 within 12 steps
    let o = run(tmp.path(), WEIGHTED, &["witness", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(err["code"], "no_eligible_index");
}

#[test]
fn every_command_runs_on_the_weighted_shift() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["orbit", "construct", "witness", "modulus", "verify", "scan"] {
        let out = tmp.path().join(cmd);
        let o = run(tmp.path(), WEIGHTED, &[cmd, "--set", "horizon=40", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for f in ["results.csv", "results.json", "provenance.json"] {
            assert!(out.join(f).exists(), "{cmd}: {f}");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["orbit", "witness", "modulus", "construct"] {
        let read = |tag: &str| {
            let out = tmp.path().join(format!("{cmd}-{tag}"));
            let o =
                run(tmp.path(), WEIGHTED, &[cmd, "--set", "horizon=40", "--seed", "7", "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{cmd}");
            (fs::read(out.join("results.csv")).unwrap(), fs::read(out.join("results.json")).unwrap())
        };
        assert_eq!(read("a"), read("b"), "{cmd}");
    }
}

#[test]
fn seed_flag_changes_random_vectors() {
    let tmp = TempDir::new().unwrap();
    let read = |seed: &str| {
        let out = tmp.path().join(format!("s{seed}"));
        let o = run(tmp.path(), WEIGHTED, &["orbit", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        let prov: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
        assert_eq!(prov["seeds"][0].to_string(), seed);
        fs::read(out.join("results.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}
