use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn imub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imub"))
        .args(args)
        .env("IMUB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SIM: &str = r#"{
  "kernel": {"lattice": {"dim": 1, "side": 21}},
  "epsilon": 0.2,
  "t_end": 3.0,
  "mode": {"truncated": {"K": 6.0}},
  "initial": [[9, 1, 1.0], [11, 2, 1.0]],
  "observe_every": 1.0,
  "seed": 3,
  "duality_probes": [[[9, 1.0, 0.0], [11, 0.0, 1.0]]],
  "snapshot": true,
  "replicas": 20
}"#;

/// Every output file except the manifest, which records wall times.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", SIM);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = imub(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (outputs(&a), outputs(&b));
    assert!(fa.iter().any(|(n, _)| n.starts_with("trajectory-")));
    assert!(fa.iter().any(|(n, _)| n.starts_with("final-state-")));
    assert_eq!(fa, fb);
    assert!(a.join("manifest.json").exists());

    let c = dir.path().join("c");
    let o = imub(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_ne!(outputs(&c), fa);
}

#[test]
fn experiment_report_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{"experiment": "coexistence", "kernel": {"lattice": {"dim": 1, "side": 21}},
            "l1": 8, "l2": 12, "horizons": [2, 4], "replicas": 50, "epsilon": 0.25, "seed": 9}"#,
    );
    let read = |name: &str| {
        let out = dir.path().join(name);
        let o = imub(&[
            "experiment",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["raw.jsonl", "summary.csv", "manifest.json"] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        std::fs::read(out.join("report.json")).unwrap()
    };
    assert_eq!(read("r1"), read("r2"));
}

#[test]
fn sample_exit_mean_matches_start() {
    let o = imub(&[
        "sample-exit",
        "--x",
        "0.3,0.6",
        "--box",
        "1",
        "--n",
        "20000",
        "--seed",
        "1",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y1,y2"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 20000);
    let n = rows.len() as f64;
    let m1 = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let m2 = rows.iter().map(|r| r.1).sum::<f64>() / n;
    // both coordinates have variance V ≤ 0.15, so se ≤ 0.003
    assert!((m1 - 0.3).abs() < 0.012, "{m1}");
    assert!((m2 - 0.6).abs() < 0.012, "{m2}");
}

#[test]
fn verify_passes() {
    let o = imub(&["verify"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("PASS") && !text.contains("FAIL"));
}

#[test]
fn unknown_subcommand_exits_two() {
    assert_eq!(imub(&["bogus"]).status.code(), Some(2));
}

#[test]
fn invalid_config_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        &SIM.replace("\"epsilon\": 0.2", "\"epsilon\": 0.0"),
    );
    let o = imub(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).expect("stderr is JSON");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("epsilon must be positive"));
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn green_on_flip_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(
        dir.path(),
        "flip.json",
        r#"{"n_sites": 2, "triples": [[0, 1, 1.0], [1, 0, 1.0]]}"#,
    );
    let o = imub(&[
        "green",
        "--kernel",
        k.to_str().unwrap(),
        "--k",
        "0",
        "--l",
        "0",
        "--t",
        "3",
        "--which",
        "bar-g",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let want = 1.5 + (1.0 - (-6.0f64).exp()) / 4.0;
    assert!(
        (est["value"].as_f64().unwrap() - want).abs() < 1e-6,
        "{est}"
    );
}
