//! Runs the built binary: exit codes, config layering, cache location.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_caption-audit"));
    c.env_remove("CAPTION_AUDIT_CACHE").env("RUST_LOG", "warn");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ingest_args(out: &Path) -> Vec<String> {
    let m = mini();
    vec![
        "--captions".into(),
        m.join("captions.json").display().to_string(),
        "--instances".into(),
        m.join("instances.json").display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&read(&dir.join("report.json"))).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec![],
        vec!["audit"],
        vec!["audit", "--out", "x", "--threshold", "1.5"],
        vec!["audit", "--out", "x", "--alpha", "0"],
        vec!["score", "--out", "x", "--sentiment-provider", "vader"],
        vec!["ingest", "--out", "x"],
    ] {
        let o = run(bin().args(&args));
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    let o = run(bin().arg("--help"));
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("--sentiment-provider"));
}

#[test]
fn input_format_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, b"{\"annotations\": [ {\"id\": 1,, } ]}").unwrap();
    let out = tmp.path().join("o");
    let o = run(bin()
        .args(["ingest", "--captions"])
        .arg(&bad)
        .arg("--instances")
        .arg(mini().join("instances.json"))
        .arg("--out")
        .arg(&out));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("offset"), "{err}");

    let o = run(bin()
        .args(["ingest", "--captions"])
        .arg(tmp.path().join("missing.json"))
        .arg("--instances")
        .arg(mini().join("instances.json"))
        .arg("--out")
        .arg(&out));
    assert_eq!(o.status.code(), Some(2));

    // auditing a directory that was never ingested
    let o = run(bin()
        .arg("audit")
        .arg("--out")
        .arg(tmp.path().join("empty")));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn staged_commands_succeed_and_log_to_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(bin()
        .env("RUST_LOG", "info")
        .arg("ingest")
        .args(ingest_args(&out)));
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let log = String::from_utf8_lossy(&o.stderr);
    assert!(log.contains("43 captions"), "{log}");
    assert!(log.contains("dropped 1 images"), "{log}");
    let diag: Value = serde_json::from_slice(&read(&out.join("diagnostics.json"))).unwrap();
    assert_eq!(diag["human"]["dropped_images_without_captions"], 1);

    assert_eq!(
        run(bin().arg("score").arg("--out").arg(&out)).status.code(),
        Some(0)
    );
    assert_eq!(
        run(bin().arg("audit").arg("--out").arg(&out)).status.code(),
        Some(0)
    );
    let r = report(&out);
    assert_eq!(r["strong"]["human"]["captions_strong"], 15);
    assert!(r["comparison"].is_null());
    assert!(!out.join("hist_sentiment_model.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "captions_path": mini().join("captions.json"),
            "instances_path": mini().join("instances.json"),
            "output_dir": out,
            "threshold": 0.9,
            "alpha": 0.2,
            "bins_sentiment": 8
        })
        .to_string(),
    )
    .unwrap();
    let o = run(bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--threshold", "0.3"]));
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let p = &report(&out)["provenance"];
    assert_eq!(p["strong_threshold"], 0.3);
    assert_eq!(p["alpha"], 0.2);
    assert_eq!(p["bins_sentiment"], 8);
    assert_eq!(p["bins_variability"], 50);

    std::fs::write(&cfg, br#"{"treshold": 0.5}"#).unwrap();
    let o = run(bin()
        .arg("audit")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn cache_env_var_relocates_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cache = tmp.path().join("shared-cache");
    assert_eq!(
        run(bin().arg("ingest").args(ingest_args(&out)))
            .status
            .code(),
        Some(0)
    );
    let o = run(bin()
        .env("CAPTION_AUDIT_CACHE", &cache)
        .arg("score")
        .arg("--out")
        .arg(&out));
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.join("cache").exists());
    let names: Vec<String> = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(
        names.iter().any(|n| n == "scores-lexicon-1-human.ndjson"),
        "{names:?}"
    );
    assert!(
        names
            .iter()
            .any(|n| n == "embeddings-hash-1-d64-human.ndjson"),
        "{names:?}"
    );
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let o = run(bin()
            .args([
                "synth",
                "--synth-captions",
                "500",
                "--synth-categories",
                "6",
                "--seed",
                seed,
                "--out",
            ])
            .arg(dir));
        assert_eq!(o.status.code(), Some(0));
    }
    for f in [
        "captions.json",
        "instances.json",
        "scores.ndjson",
        "planted.json",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert_ne!(
        read(&a.join("scores.ndjson")),
        read(&c.join("scores.ndjson"))
    );

    let o = run(bin()
        .args([
            "synth",
            "--synth-categories",
            "2",
            "--planted",
            "0.1",
            "--out",
        ])
        .arg(&c));
    assert_eq!(o.status.code(), Some(1));
}
