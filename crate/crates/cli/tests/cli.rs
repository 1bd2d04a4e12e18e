use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn demo() -> PathBuf {
    repo_root().join("data/demo_corpus.jsonl")
}

fn cpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpi"))
        .args(args)
        .arg("--vocab")
        .arg(repo_root().join("assets/bpe_simple_vocab_16e6.txt.gz"))
        .env_remove("CPI_EMBED_ENDPOINT")
        .env_remove("CPI_CACHE_DIR")
        .output()
        .expect("spawn cpi")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stderr)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("not JSON: {l:?}: {e}")))
        .collect()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn version_names_formats() {
    let o = cpi(&["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("cpi 0.1.0"), "{text}");
    assert!(text.contains("artifact format 1") && text.contains("embedding cache format 1"), "{text}");
}

#[test]
fn every_violation_is_reported_with_exit_2() {
    let o = cpi(&["run", "--rho", "0.7", "--target-fraction", "0.8", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = &stderr_json(&o)[0];
    assert_eq!(err["error"], "config");
    let fields: Vec<&str> = err["violations"].as_array().unwrap().iter().map(|v| v["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["target_fraction", "workers", "corpus"]);
}

#[test]
fn unknown_flag_is_a_config_error() {
    let o = cpi(&["run", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)[0]["error"], "config");
}

#[test]
fn missing_corpus_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpi(&["run", "--corpus", s(&dir.path().join("absent.jsonl")), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)[0]["error"], "data");
}

#[test]
fn malformed_corpus_exits_3_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"image\":\"synth:x\",\"caption\":\"a cat\"}\n{\"id\":\"a\",\"image\":\"synth:y\",\"caption\":\"a dog\"}\n").unwrap();
    let o = cpi(&["score-align", "--corpus", s(&corpus), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr_json(&o)[0]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("line 2"), "{msg}");
}

#[test]
fn unreachable_endpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // Port 9 (discard) is closed on loopback; connections are refused.
    let o = cpi(&[
        "score-align",
        "--corpus",
        s(&demo()),
        "--out-dir",
        s(dir.path()),
        "--backend",
        "remote",
        "--embed-endpoint",
        "http://127.0.0.1:9",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(4));
    let err = &stderr_json(&o)[0];
    assert_eq!(err["error"], "backend");
    assert_eq!(err["stage"], "align");
    assert!(err["message"].as_str().unwrap().contains("3 attempts"));
}

#[test]
fn strict_cache_miss_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("e.cpie");
    let o = cpi(&[
        "score-align",
        "--corpus",
        s(&demo()),
        "--out-dir",
        s(&dir.path().join("out")),
        "--backend",
        "cached",
        "--cache",
        s(&cache),
        "--embed-dim",
        "8",
        "--strict-cache",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr_json(&o)[0]["message"].as_str().unwrap().contains("no cached embedding"));
    assert!(cache.is_file());
}

#[test]
fn stages_chain_resume_and_report_progress() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let corpus = demo();
    let base = ["--corpus", s(&corpus), "--out-dir", s(&out)];
    let step = |cmd: &str| {
        let mut args = vec![cmd];
        args.extend_from_slice(&base);
        let o = cpi(&args);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    let o = step("score-align");
    assert_eq!(stdout_json(&o)["stage1_pool"], 700);
    assert!(out.join("align_manifest.jsonl").is_file() && !out.join("phrases.jsonl").exists());
    step("extract");
    step("forge");
    let o = step("score-pas");
    assert_eq!(stdout_json(&o)["valid_records"], 700);
    let o = step("select");
    let lines = stderr_json(&o);
    for stage in ["align", "extract", "forge", "score"] {
        let l = lines.iter().find(|l| l["stage"] == stage).unwrap_or_else(|| panic!("no progress for {stage}"));
        assert_eq!(l["resumed"], true, "{stage} should resume");
    }
    let select = lines.iter().find(|l| l["stage"] == "select").unwrap();
    assert_eq!(select["resumed"], false);
    assert!(select["rate"].is_number() && select["processed"] == select["total"]);
    let first = std::fs::read(out.join("cpi_manifest.jsonl")).unwrap();

    let o = step("run");
    assert_eq!(stdout_json(&o)["summary"]["kept"], 500);
    assert!(stderr_json(&o).iter().all(|l| l["resumed"] == true));
    assert_eq!(std::fs::read(out.join("cpi_manifest.jsonl")).unwrap(), first);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cpi.toml");
    std::fs::write(
        &cfg,
        format!(
            "corpus = {:?}\nout_dir = {:?}\nrho = 0.9\ntarget_fraction = 0.2\n",
            s(&demo()),
            s(&dir.path().join("from-file"))
        ),
    )
    .unwrap();
    let o = cpi(&["score-align", "--config", s(&cfg), "--rho", "0.6", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["stage1_pool"], 600);
    assert!(dir.path().join("from-file/align_manifest.jsonl").is_file());
}

#[test]
fn sweep_writes_one_manifest_per_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpi(&["sweep", "--corpus", s(&demo()), "--out-dir", s(dir.path()), "--rhos", "1.0,0.5", "--quiet"]);
    assert!(o.status.success());
    let kept: Vec<u64> = stdout_json(&o)["sweep"].as_array().unwrap().iter().map(|v| v["kept"].as_u64().unwrap()).collect();
    assert_eq!(kept, [1000, 500]);
    assert!(dir.path().join("sweep_rho1.00.jsonl").is_file() && dir.path().join("sweep_rho0.50.jsonl").is_file());
}

#[test]
fn diagnostics_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let corpus = demo();
    let o = cpi(&["run", "--corpus", s(&corpus), "--out-dir", out, "--quiet"]);
    assert!(o.status.success());
    for (args, file) in [
        (vec!["diag", "corr"], "diag_corr.json"),
        (vec!["diag", "hist", "--bins", "8"], "diag_hist.json"),
        (vec!["diag", "heuristics"], "diag_heuristics.json"),
        (vec!["diag", "displacement", "--limit", "300"], "diag_displacement.json"),
        (vec!["diag", "controls", "--n", "150"], "diag_controls.json"),
    ] {
        let mut full = args.clone();
        full.extend_from_slice(&["--corpus", s(&corpus), "--out-dir", out, "--quiet"]);
        let o = cpi(&full);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(file)).unwrap()).unwrap();
        assert_eq!(written, stdout_json(&o), "{file}");
    }
    let tsv = std::fs::read_to_string(dir.path().join("diag_hist_score.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 9);
    let controls: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("diag_controls.json")).unwrap()).unwrap();
    let modes: Vec<&str> = controls["results"].as_array().unwrap().iter().map(|r| r["mode"].as_str().unwrap()).collect();
    assert_eq!(modes, ["nonce", "same_category", "cross_category"]);
    let baseline = std::fs::read_to_string(dir.path().join("baseline_phrase_count_manifest.jsonl")).unwrap();
    assert_eq!(baseline.lines().count(), 501);
}

#[test]
fn diag_without_artifacts_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpi(&["diag", "corr", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn too_few_control_pairs_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert!(cpi(&["score-align", "--corpus", s(&demo()), "--out-dir", out, "--quiet"]).status.success());
    let o = cpi(&["diag", "controls", "--n", "0", "--corpus", s(&demo()), "--out-dir", out]);
    assert_eq!(o.status.code(), Some(3));
}
