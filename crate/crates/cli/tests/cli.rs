//! End-to-end run of the binary subcommands on a small corpus.

use std::path::Path;
use std::process::Command;

fn mercat(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mercat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn expect_ok(args: &[&str]) -> String {
    let out = mercat(args);
    assert!(
        out.status.success(),
        "mercat {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn subcommands_compose_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        serde_json::to_vec_pretty(&serde_json::json!({
            "world": {
                "seed": 5, "n_brands": 8, "n_categories": 3, "n_items": 600,
                "n_queries": 300, "ambiguity_rate": 0.3, "accessory_rate": 0.2,
                "noise_rate": 0.35
            },
            "n_sessions": 700,
            "n_sts_pairs": 150
        }))
        .unwrap(),
    )
    .unwrap();

    expect_ok(&["datagen", "--spec", p(&spec), "--out", p(&data)]);
    for file in ["items.jsonl", "pairs.jsonl", "eval.jsonl", "sts.tsv", "truth.json"] {
        assert!(data.join(file).exists(), "missing {file}");
    }

    let model = dir.path().join("model.menc");
    let log = dir.path().join("train.jsonl");
    expect_ok(&[
        "train",
        "--pairs", p(&data.join("pairs.jsonl")),
        "--model-out", p(&model),
        "--dims", "32,16,8",
        "--hash-space", "4096",
        "--batch", "32",
        "--epochs", "2",
        "--seed", "9",
        "--log", p(&log),
    ]);
    assert!(model.exists() && log.exists());

    let memb = dir.path().join("items.memb");
    expect_ok(&[
        "encode",
        "--model", p(&model),
        "--items", p(&data.join("items.jsonl")),
        "--out", p(&memb),
    ]);

    let pca = dir.path().join("pca.mpca");
    expect_ok(&["pca-fit", "--embeddings", p(&memb), "--dim", "8", "--out", p(&pca)]);
    let projected = dir.path().join("items8.memb");
    expect_ok(&[
        "pca-apply",
        "--model", p(&pca),
        "--embeddings", p(&memb),
        "--out", p(&projected),
    ]);

    let idx = dir.path().join("idx");
    expect_ok(&[
        "index",
        "--items", p(&data.join("items.jsonl")),
        "--model", p(&model),
        "--out", p(&idx),
    ]);

    // Search output: one JSON candidate per line.
    let stdout = expect_ok(&[
        "search",
        "--index", p(&idx),
        "--query", "anything at all",
        "--k", "5",
        "--hybrid",
        "--tau", "0.5",
    ]);
    for line in stdout.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("json line");
        assert!(v.get("rank").is_some() && v.get("item_id").is_some());
        assert!(v.get("lexical_score").is_some() && v.get("dense_score").is_some());
        assert!(v.get("source").is_some());
    }

    let report_a = dir.path().join("eval_a.json");
    expect_ok(&[
        "eval-logs",
        "--index", p(&idx),
        "--queries", p(&data.join("eval.jsonl")),
        "--k", "5,10,50",
        "--report", p(&report_a),
    ]);
    assert!(report_a.exists());

    expect_ok(&[
        "eval-sts",
        "--model", p(&model),
        "--pairs", p(&data.join("sts.tsv")),
        "--dims", "32,16,8",
    ]);

    let delta = dir.path().join("delta.json");
    let table = expect_ok(&[
        "compare",
        "--baseline", p(&report_a),
        "--candidate", p(&report_a),
        "--out", p(&delta),
    ]);
    assert!(table.contains("ndcg"));
    assert!(delta.exists());

    expect_ok(&[
        "gradient-check",
        "--seed", "3",
        "--dims", "16,8",
        "--hash-space", "2048",
        "--batch", "4",
    ]);
}

#[test]
fn unknown_flags_are_errors() {
    let out = mercat(&["search", "--no-such-flag"]);
    assert!(!out.status.success());
    let out = mercat(&["--help"]);
    assert!(out.status.success());
    let help = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "datagen", "train", "encode", "pca-fit", "pca-apply", "index", "search", "eval-logs",
        "eval-sts", "compare", "gradient-check", "serve", "pipeline",
    ] {
        assert!(help.contains(sub), "--help missing {sub}");
    }
}

#[test]
fn pipeline_fails_with_stage_name_on_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    // Invalid world: zero items.
    std::fs::write(
        &config,
        serde_json::to_vec(&serde_json::json!({
            "seed": 1,
            "world": { "seed": 0, "n_brands": 4, "n_categories": 2, "n_items": 0,
                        "n_queries": 50, "ambiguity_rate": 0.0, "accessory_rate": 0.0,
                        "noise_rate": 0.0 }
        }))
        .unwrap(),
    )
    .unwrap();
    let out = mercat(&[
        "pipeline",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage datagen"), "stderr: {stderr}");
}
