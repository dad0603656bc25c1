use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gaptext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaptext"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gaptext(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TRAIN_TOML: &str = "[model]\nd_model = 8\nn_layers = 2\nn_heads = 2\nd_ff = 16\n\n[tokenizer]\nmax_len = 64\n\n[train]\nepochs = 2\nbatch_size = 8\nlearning_rate = 1e-3\n";

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "5", "synth", "--n", "40", "--out", "raw.jsonl"]);
    assert_eq!(fs::read_to_string(d.join("raw.jsonl")).unwrap().lines().count(), 40);
    ok(
        d,
        &["--seed", "5", "ingest", "--in", "raw.jsonl", "--hi", "100", "--bins", "4", "--out", "splits.json", "--records-out", "records.jsonl"],
    );
    let splits: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("splits.json")).unwrap()).unwrap();
    let sizes: Vec<usize> = ["test", "train", "val"].iter().map(|k| splits[k].as_array().unwrap().len()).collect();
    assert_eq!(sizes.iter().sum::<usize>(), 40);
    assert_eq!(sizes[0], 4);

    ok(d, &["textgen", "--in", "records.jsonl", "--out", "corpus.jsonl"]);
    let first = fs::read_to_string(d.join("corpus.jsonl")).unwrap();
    assert!(first.lines().next().unwrap().contains("\"format\":\"structured\""));
    let stats = ok(d, &["tokenize", "--in", "corpus.jsonl", "--vocab", "vocab.txt", "--max-len", "64", "--splits", "splits.json"]);
    let mut lines = stats.lines();
    assert_eq!(lines.next(), Some("texts,vocab_size,min_len,max_len,truncated"));
    assert!(lines.next().unwrap().ends_with(",40"));

    fs::write(d.join("train.toml"), TRAIN_TOML).unwrap();
    ok(
        d,
        &["--seed", "1", "train", "--config", "train.toml", "--splits", "splits.json", "--corpus", "corpus.jsonl", "--vocab", "vocab.txt", "--out", "model.json", "--log", "log.csv"],
    );
    assert_eq!(fs::read_to_string(d.join("log.csv")).unwrap().lines().count(), 3);

    let eval = ok(d, &["eval", "--model", "model.json", "--corpus", "corpus.jsonl", "--splits", "splits.json"]);
    assert!(eval.starts_with("split,n,mae,rmse,r2,mae_sd,rmse_sd,r2_sd\ntrain,"));

    ok(
        d,
        &["attn", "--model", "model.json", "--corpus", "corpus.jsonl", "--splits", "splits.json", "--layers", "1,last", "--out", "attn.csv", "--svg", "attn.svg"],
    );
    let attn = fs::read_to_string(d.join("attn.csv")).unwrap();
    assert!(attn.lines().skip(1).all(|l| l.starts_with("1,") || l.starts_with("2,")));
    assert!(fs::read_to_string(d.join("attn.svg")).unwrap().starts_with("<svg"));

    ok(
        d,
        &["tsne", "--model", "model.json", "--corpus", "corpus.jsonl", "--perplexity", "5", "--iterations", "50", "--color-by", "band_gap", "--out", "tsne.csv", "--kl", "kl.csv"],
    );
    assert_eq!(fs::read_to_string(d.join("tsne.csv")).unwrap().lines().count(), 41);
    assert_eq!(fs::read_to_string(d.join("kl.csv")).unwrap().lines().count(), 51);

    fs::write(d.join("grid.cfg"), "n_trees = 3\nmax_depth = 3, 5\n").unwrap();
    let cv = ok(
        d,
        &["baseline", "--records", "records.jsonl", "--splits", "splits.json", "--grid", "grid.cfg", "--folds", "3", "--metrics", "bm.csv"],
    );
    assert_eq!(cv.lines().count(), 7);
    assert!(fs::read_to_string(d.join("bm.csv")).unwrap().contains("mean_predictor,test,4,"));
}

#[test]
fn pipeline_command_prints_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let toml = format!("[run]\nout_dir = \"out\"\nstages = [\"ingest\", \"textgen\", \"tokenize\", \"train\", \"evaluate\"]\n[data]\nn = 30\n{TRAIN_TOML}");
    fs::write(d.join("p.toml"), toml).unwrap();
    let stdout = ok(d, &["--seed", "9", "--format", "description", "pipeline", "--config", "p.toml"]);
    let run_dir = d.join(stdout.trim());
    assert!(run_dir.join("metrics.csv").is_file());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["text"]["format"], "description");
    assert!(manifest["command"].as_str().unwrap().contains("pipeline"));
}

#[test]
fn errors_exit_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = gaptext(d, &["textgen", "--in", "nope.jsonl", "--out", "c.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    fs::write(d.join("bad.jsonl"), "{\"compound\": 1}\n").unwrap();
    let out = gaptext(d, &["ingest", "--in", "bad.jsonl", "--out", "s.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    fs::write(d.join("p.toml"), "[model]\nwidth = 4\n").unwrap();
    let out = gaptext(d, &["pipeline", "--config", "p.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));

    let out = gaptext(d, &["train", "--freeze", "half", "--splits", "a", "--corpus", "b", "--vocab", "c", "--out", "m"]);
    assert!(!out.status.success());
}

#[test]
fn help_lists_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let help = ok(tmp.path(), &["--help"]);
    for c in ["synth", "ingest", "textgen", "tokenize", "train", "eval", "attn", "tsne", "baseline", "pipeline"] {
        assert!(help.contains(c), "{c}");
    }
}
