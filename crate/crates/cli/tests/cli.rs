use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use hvh_core::bench::{generate_video, CorpusParams};
use hvh_core::media::{write_y4m, Chroma};
use serde_json::Value;
use tempfile::TempDir;

fn hvh() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hvh"))
}

fn run(args: &[&str]) -> Output {
    hvh().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.json"))
}

/// Runs with `--json`, checks exit 0 and validates stdout against `schema`.
fn run_json(schema: &str, args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = run(&all);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let value: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    assert_valid(schema, &value);
    value
}

fn assert_valid(schema: &str, value: &Value) {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path(schema)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{value} violates schema: {errors:?}");
}

fn write_sample(dir: &Path, name: &str, index: usize, seconds: f64) -> PathBuf {
    let params = CorpusParams {
        count: index + 1,
        min_seconds: seconds,
        max_seconds: seconds,
        seed: 42,
        ..CorpusParams::default()
    };
    let path = dir.join(name);
    std::fs::write(&path, write_y4m(&generate_video(&params, index), Chroma::C420)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn keygen_writes_two_key_files() {
    let dir = TempDir::new().unwrap();
    let keys = dir.path().join("keys");
    let v = run_json("keygen", &["--seed", "1", "keygen", "--bits", "512", "--out", s(&keys)]);
    assert_eq!(v["key_bits"], 512);
    assert!(keys.join("hvh.pub").is_file());
    assert!(keys.join("hvh.key").is_file());
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(keys.join("hvh.key")).unwrap().permissions().mode();
        assert_eq!(mode & 0o077, 0);
    }
    // same seed, same keys
    let again = dir.path().join("again");
    run_json("keygen", &["--seed", "1", "keygen", "--bits", "512", "--out", s(&again)]);
    assert_eq!(
        std::fs::read(keys.join("hvh.key")).unwrap(),
        std::fs::read(again.join("hvh.key")).unwrap()
    );
}

#[test]
fn hash_then_self_compare_is_one() {
    let dir = TempDir::new().unwrap();
    let video = write_sample(dir.path(), "video.y4m", 0, 2.0);
    let out = dir.path().join("v.hvh");
    let h = run_json("hash", &["hash", s(&video), "--out", s(&out)]);
    assert_eq!(h["source_id"], "video");
    assert_eq!(h["total_frames"], 60);
    let c = run_json("compare", &["compare", s(&out), s(&out)]);
    assert_eq!(c["similarity"], 1.0);
    assert_eq!(c["score"], c["self_score_a"]);

    let text = run(&["compare", s(&out), s(&out)]);
    assert_eq!(code(&text), 0);
    assert!(String::from_utf8_lossy(&text.stdout).contains("similarity  1.0000"));
}

#[test]
fn hash_is_idempotent_and_stdin_matches_file() {
    let dir = TempDir::new().unwrap();
    let video = write_sample(dir.path(), "clip.y4m", 1, 1.5);
    let (a, b, c) = (dir.path().join("a.hvh"), dir.path().join("b.hvh"), dir.path().join("c.hvh"));
    run_json("hash", &["hash", s(&video), "--out", s(&a)]);
    run_json("hash", &["--execution", "sequential", "hash", s(&video), "--out", s(&b)]);
    let child = hvh()
        .args(["--json", "hash", "--id", "clip", "--out", s(&c)])
        .stdin(std::fs::File::open(&video).unwrap())
        .stdout(Stdio::piped())
        .output()
        .unwrap();
    assert_eq!(code(&child), 0);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes, std::fs::read(&c).unwrap());
}

#[test]
fn encrypted_three_stage_run_matches_plaintext_hash() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let video = write_sample(d, "enc.y4m", 2, 1.0);
    let keys = d.join("keys");
    run_json("keygen", &["--seed", "7", "keygen", "--bits", "256", "--out", s(&keys)]);
    let (pk, sk) = (keys.join("hvh.pub"), keys.join("hvh.key"));
    let (hve, hvc, enc, plain) = (d.join("v.hve"), d.join("v.hvc"), d.join("enc.hvh"), d.join("plain.hvh"));

    let p = run_json(
        "tz-prepare",
        &["--seed", "3", "--private-key", s(&sk), "hash-enc", "tz-prepare", s(&video), "--out", s(&hve)],
    );
    assert_eq!(p["ciphertexts"], p["keyframes"].as_u64().unwrap() * 64 * 64);
    run_json(
        "server-aggregate",
        &["--public-key", s(&pk), "hash-enc", "server-aggregate", s(&hve), "--out", s(&hvc)],
    );
    run_json(
        "hash",
        &["--private-key", s(&sk), "hash-enc", "tz-finalize", s(&hvc), "--out", s(&enc)],
    );
    run_json("hash", &["hash", s(&video), "--out", s(&plain)]);
    assert_eq!(std::fs::read(&enc).unwrap(), std::fs::read(&plain).unwrap());

    // seeded stages are reproducible
    let hve2 = d.join("v2.hve");
    run_json(
        "tz-prepare",
        &["--seed", "3", "--private-key", s(&sk), "hash-enc", "tz-prepare", s(&video), "--out", s(&hve2)],
    );
    assert_eq!(std::fs::read(&hve).unwrap(), std::fs::read(&hve2).unwrap());

    for (file, kind) in [(&hve, "encrypted-video"), (&hvc, "components"), (&pk, "public-key"), (&sk, "private-key")] {
        let v = run_json("inspect", &["--public-key", s(&pk), "inspect", s(file)]);
        assert_eq!(v["kind"], kind);
    }

    // the server refuses data under a different key
    let other = d.join("other");
    run_json("keygen", &["--seed", "8", "keygen", "--bits", "256", "--out", s(&other)]);
    let out = run(&[
        "--public-key",
        s(&other.join("hvh.pub")),
        "hash-enc",
        "server-aggregate",
        s(&hve),
        "--out",
        s(&d.join("x.hvc")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_layers_defaults_file_then_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("hvh.conf");
    std::fs::write(
        &cfg,
        "# settings\nhash_threshold = 3\ndrop_threshold = 2\nseed = 11\npublic_key = keys/hvh.pub\n",
    )
    .unwrap();
    let v = run_json(
        "print-config",
        &["--config", s(&cfg), "--hash-threshold", "4", "--print-config"],
    );
    let c = &v["config"];
    assert_eq!(c["hash_threshold"], 4);
    assert_eq!(c["drop_threshold"], 2);
    assert_eq!(c["seed"], 11);
    assert_eq!(c["resolution"], 64);
    assert_eq!(c["public_key"], s(&dir.path().join("keys/hvh.pub")));

    let text = run(&["--config", s(&cfg), "--print-config", "keygen", "--bits", "1024", "--out", "unused"]);
    assert_eq!(code(&text), 0);
    let stdout = String::from_utf8_lossy(&text.stdout);
    assert!(stdout.contains("key_bits = 1024"));
    assert!(stdout.contains("hash_threshold = 3"));
    assert!(!Path::new("unused").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["--no-such-flag"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--block-grid", "7", "--print-config"])), 1);
    assert_eq!(code(&run(&["--rounding", "sideways", "--print-config"])), 1);
    assert_eq!(code(&run(&["hash-enc", "server-aggregate", "x.hve", "--out", "y"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);

    assert_eq!(code(&run(&["hash", s(&d.join("missing.y4m"))])), 2);
    let junk = d.join("junk.y4m");
    std::fs::write(&junk, b"not a video").unwrap();
    assert_eq!(code(&run(&["hash", s(&junk)])), 2);
    assert_eq!(code(&run(&["compare", s(&junk), s(&junk)])), 2);
    assert_eq!(code(&run(&["inspect", s(&junk)])), 2);
    let cfg = d.join("bad.conf");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "--print-config"])), 1);
    assert_eq!(code(&run(&["--config", s(&d.join("none.conf")), "--print-config"])), 2);
}

#[test]
fn index_add_query_and_inspect() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut hashes = Vec::new();
    for i in 0..3 {
        let video = write_sample(d, &format!("v{i}.y4m"), i, 2.0);
        let out = d.join(format!("v{i}.hvh"));
        run_json("hash", &["hash", s(&video), "--out", s(&out)]);
        hashes.push(out);
    }
    let index = d.join("db.hvx");
    let a = run_json("index-add", &["index", "add", s(&index), s(&hashes[0]), s(&hashes[1])]);
    assert_eq!(a["entries"], 2);
    let a = run_json("index-add", &["index", "add", s(&index), s(&hashes[2])]);
    assert_eq!(a["entries"], 3);
    assert_eq!(code(&run(&["index", "add", s(&index), s(&hashes[2])])), 2);

    let q = run_json("index-query", &["index", "query", s(&index), s(&hashes[1]), "--min-similarity", "0.9"]);
    let hits = q["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0]["source_id"], "v1");
    assert_eq!(hits[0]["similarity"], 1.0);
    let q = run_json("index-query", &["index", "query", s(&index), s(&hashes[1]), "--top", "2"]);
    assert_eq!(q["hits"].as_array().unwrap().len(), 2);
    assert_eq!(q["hits"][0]["source_id"], "v1");

    let i = run_json("inspect", &["inspect", s(&index)]);
    assert_eq!(i["kind"], "index");
    assert_eq!(i["entries"].as_array().unwrap().len(), 3);
    let h = run_json("inspect", &["inspect", s(&hashes[0])]);
    assert_eq!(h["kind"], "video-hash");
    assert_eq!(h["records"].as_array().unwrap().len() as u64, h["keyframes"].as_u64().unwrap());
}

#[test]
fn bench_writes_report_and_panels() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench");
    let args = [
        "--seed", "4", "bench", "--out", s(&out), "--videos", "4", "--variants", "2", "--min-seconds", "1",
        "--max-seconds", "1.5",
    ];
    let v = run_json("bench", &args);
    assert_eq!(v["similar_pairs"], v["videos"].as_u64().unwrap() * 2);
    assert!(v["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("compression surrogate")));
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["roc"]["tpr"][0], 1.0);
    for p in ["gamma", "snr_db", "quality", "scale"] {
        let csv = std::fs::read_to_string(out.join(format!("panel_{p}.csv"))).unwrap();
        assert!(csv.starts_with("parameter,lo,hi,count,mean_similarity,tpr\n"));
    }
    // identical settings reproduce the report
    let first = std::fs::read(out.join("report.json")).unwrap();
    run_json("bench", &args);
    assert_eq!(first, std::fs::read(out.join("report.json")).unwrap());
}
