//! End-to-end checks driven through the compiled binary against the
//! bundled mini corpus, with mock backends only. No network access.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn coda_bin() -> &'static str {
    env!("CARGO_BIN_EXE_coda")
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/mini_corpus")
}

fn write_config(path: &Path, out_dir: &Path) {
    let config = serde_json::json!({
        "corpus_dir": corpus_dir(),
        "out_dir": out_dir,
        "run_id": "smoke-001",
        "samples_per_film": 1,
        "min_half_chars": 1000,
        "models": [
            {"id": "mock-a", "backend": {"kind": "mock", "seed": 1}},
            {"id": "mock-b", "backend": {"kind": "mock", "seed": 2}}
        ],
        "judge": {"id": "mock-judge", "backend": {"kind": "mock", "seed": 7}}
    });
    std::fs::write(path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(coda_bin())
        .arg("--config")
        .arg(config)
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary launches")
}

fn run_ok(config: &Path, args: &[&str]) {
    let out = run(config, args);
    assert!(
        out.status.success(),
        "coda {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn full_pipeline(config: &Path, workers: &str) {
    run_ok(config, &["ingest"]);
    run_ok(config, &["profile"]);
    for model in ["mock-a", "mock-b"] {
        run_ok(
            config,
            &["--workers", workers, "generate", "--model", model],
        );
        run_ok(config, &["--workers", workers, "judge", "--model", model]);
        run_ok(config, &["score", "--model", model]);
    }
    run_ok(config, &["stats"]);
    run_ok(config, &["report"]);
}

fn walk(root: &Path) -> BTreeSet<String> {
    fn rec(dir: &Path, root: &Path, out: &mut BTreeSet<String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                rec(&path, root, out);
            } else {
                out.insert(
                    path.strip_prefix(root)
                        .unwrap()
                        .to_string_lossy()
                        .into_owned(),
                );
            }
        }
    }
    let mut out = BTreeSet::new();
    rec(root, root, &mut out);
    out
}

fn verdict(criterion: &str, ok: bool) {
    println!(
        "acceptance {criterion}: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance {criterion} failed");
}

#[test]
fn acceptance_9_offline_end_to_end_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("out-a");
    let out_b = tmp.path().join("out-b");
    let cfg_a = tmp.path().join("config-a.json");
    let cfg_b = tmp.path().join("config-b.json");
    write_config(&cfg_a, &out_a);
    write_config(&cfg_b, &out_b);

    // the two runs differ only in output directory and worker count;
    // byte-identical artifacts prove scheduling independence
    let t0 = Instant::now();
    full_pipeline(&cfg_a, "2");
    let elapsed_a = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    full_pipeline(&cfg_b, "1");
    let elapsed_b = t1.elapsed().as_secs_f64();

    let run_a = out_a.join("smoke-001");
    let run_b = out_b.join("smoke-001");
    for rel in [
        "manifest.json",
        "index.jsonl",
        "samples-mock-a.jsonl",
        "samples-mock-b.jsonl",
        "verdicts-mock-a.jsonl",
        "verdicts-mock-b.jsonl",
        "scores-mock-a.jsonl",
        "scores-mock-b.jsonl",
        "stats_report.json",
        "descriptives.json",
        "report.md",
        "tables/paired_tests.csv",
        "plots/forest.csv",
    ] {
        assert!(run_a.join(rel).is_file(), "missing artifact {rel}");
    }

    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_a.join("stats_report.json")).unwrap())
            .unwrap();
    let tests = stats.as_array().unwrap();
    assert_eq!(
        tests.len(),
        4,
        "expected one paired test per headline metric"
    );
    for t in tests {
        assert_eq!(t["n_pairs"], 3, "all three films should pair up");
    }

    let files_a = walk(&run_a);
    let files_b = walk(&run_b);
    assert_eq!(files_a, files_b, "run directories hold different file sets");
    let mut diffs = Vec::new();
    for rel in &files_a {
        if std::fs::read(run_a.join(rel)).unwrap() != std::fs::read(run_b.join(rel)).unwrap() {
            diffs.push(rel.clone());
        }
    }
    assert!(diffs.is_empty(), "artifacts differ between runs: {diffs:?}");
    assert!(
        elapsed_a < 10.0 && elapsed_b < 10.0,
        "pipeline too slow: {elapsed_a:.1}s / {elapsed_b:.1}s"
    );
    verdict("9 offline end-to-end smoke", true);
}

#[test]
fn resume_dependency_gates_and_empty_overlap() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("config.json");
    write_config(&cfg, &out_dir);
    let run_dir = out_dir.join("smoke-001");

    // stage gating: stats before anything upstream exists
    let out = run(&cfg, &["stats"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "missing dependency should exit 3"
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("needs the"),
        "dependency error should name the missing stage, got: {stderr}"
    );

    // config errors: unknown model id, then missing config file
    let out = run(&cfg, &["generate", "--model", "nope"]);
    assert_eq!(out.status.code(), Some(2), "unknown model should exit 2");
    let out = run(&tmp.path().join("absent.json"), &["ingest"]);
    assert_eq!(out.status.code(), Some(2), "missing config should exit 2");

    full_pipeline(&cfg, "1");

    // resume: drop two of three sample rows, clear the stage flag, and
    // rerun; only the missing rows run again and the file converges
    let samples_path = run_dir.join("samples-mock-a.jsonl");
    let full = std::fs::read_to_string(&samples_path).unwrap();
    assert_eq!(full.lines().count(), 3);
    let first_line = full.lines().next().unwrap();
    std::fs::write(&samples_path, format!("{first_line}\n")).unwrap();
    let manifest_path = run_dir.join("manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["stages"]["generate:mock-a"] = serde_json::Value::Bool(false);
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap() + "\n",
    )
    .unwrap();
    run_ok(&cfg, &["generate", "--model", "mock-a"]);
    let resumed = std::fs::read_to_string(&samples_path).unwrap();
    assert_eq!(
        resumed, full,
        "resumed samples file should match the original byte for byte"
    );

    // rerunning generate invalidated its downstream stages; completing
    // them again is a cheap resume since every verdict already exists
    run_ok(&cfg, &["judge", "--model", "mock-a"]);
    run_ok(&cfg, &["score", "--model", "mock-a"]);

    // zero overlap: with one side's verdicts gone, stats still succeeds
    // and writes an empty result set
    std::fs::write(run_dir.join("verdicts-mock-b.jsonl"), "").unwrap();
    run_ok(&cfg, &["stats"]);
    let stats_txt = std::fs::read_to_string(run_dir.join("stats_report.json")).unwrap();
    assert_eq!(
        stats_txt.trim(),
        "[]",
        "no pairs should yield an empty report"
    );
    run_ok(&cfg, &["report"]);
    let report = std::fs::read_to_string(run_dir.join("report.md")).unwrap();
    assert!(report.contains("No paired samples"));
}
