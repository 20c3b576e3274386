use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosody-tree"))
        .current_dir(dir)
        .env_remove("PROSODY_TREE_OUTPUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a command that must fail; returns its stderr.
fn fails(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// Generates a small corpus and trains a tiny model on it for two epochs.
fn trained(dir: &Path) {
    write(dir, "gen.cfg", "seed = 1\nn_sentences = 30\n");
    ok(dir, &["gen", "--config", "gen.cfg", "--out", "corpus.txt"]);
    write(
        dir,
        "train.cfg",
        "d_model = 8\nn_blocks = 1\nn_heads = 2\nd_ff = 12\nd_hidden = 10\nmax_epochs = 2\n",
    );
    ok(
        dir,
        &["train", "--config", "train.cfg", "--train", "corpus.txt", "--dev", "corpus.txt", "--out", "run"],
    );
}

#[test]
fn gen_writes_corpus_and_trees() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "gen.cfg", "seed = 3\nn_sentences = 25\ncue_strength = 0.8\n");
    let stats = ok(dir, &["gen", "--config", "gen.cfg", "--out", "out/c.txt"]);
    assert!(!stats.is_empty());
    let corpus = read(dir, "out/c.txt");
    assert_eq!(corpus.lines().count(), 25);
    assert!(corpus.lines().all(|l| l.ends_with("#3")));
    assert_eq!(read(dir, "out/c.txt.trees").lines().count(), 25);

    // --seed overrides the file and is deterministic
    ok(dir, &["--seed", "8", "gen", "--config", "gen.cfg", "--out", "a.txt"]);
    ok(dir, &["--seed", "8", "gen", "--config", "gen.cfg", "--out", "b.txt"]);
    assert_eq!(read(dir, "a.txt"), read(dir, "b.txt"));
    assert_ne!(read(dir, "a.txt"), corpus);
}

#[test]
fn convert_both_ways_is_identity() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let text = "ab#1cd#2ef#3\nx#3\nabc#2d#1e#3f#3\n";
    write(dir, "seq.txt", text);
    ok(dir, &["convert", "--mode", "seq-to-tree", "--in", "seq.txt", "--out", "trees.txt"]);
    assert_eq!(read(dir, "trees.txt").lines().count(), 3);
    ok(dir, &["convert", "--mode", "tree-to-seq", "--in", "trees.txt", "--out", "back.txt"]);
    assert_eq!(read(dir, "back.txt"), text);
}

#[test]
fn convert_rejects_bad_input() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "bad.txt", "ab#3\n#1a#3\n");
    let err = fails(dir, &["convert", "--mode", "seq-to-tree", "--in", "bad.txt", "--out", "t.txt"]);
    assert!(err.contains("line 2"), "{err}");
    write(dir, "crossing.txt", "abcd\t0:3:#1 2:4:#1 0:4:#3-#2\n");
    let err = fails(dir, &["convert", "--mode", "tree-to-seq", "--in", "crossing.txt", "--out", "s.txt"]);
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn eval_reports_counts() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "gold.txt", "ab#1cd#2ef#3\na#1b#3c#3\n");
    write(dir, "pred.txt", "ab#2cd#1ef#3\nabc#3\n");
    let out = ok(dir, &["eval", "--pred", "pred.txt", "--gold", "gold.txt"]);
    assert!(out.contains("pw_tp=2\n"));
    assert!(out.contains("pph_fp=1\n"));
    assert!(out.contains("exact_match=0.000000\n"));
    let out = ok(dir, &["eval", "--pred", "gold.txt", "--gold", "gold.txt", "--exact-marks"]);
    assert!(out.contains("exact_match=1.000000\n"));

    write(dir, "short.txt", "ab#1cd#2ef#3\n");
    fails(dir, &["eval", "--pred", "short.txt", "--gold", "gold.txt"]);
}

#[test]
fn train_predict_and_reload() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    for f in ["model.ckpt", "train.log", "config.txt", "manifest.txt"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    assert_eq!(read(dir, "run/train.log").lines().count(), 3);

    write(dir, "raw.txt", "c\nabcdefg\n\nab#1cde\nzzzzqqqq\n");
    ok(dir, &["predict", "--model", "run", "--in", "raw.txt", "--out", "pred.txt"]);
    let pred = read(dir, "pred.txt");
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "c#3");
    for (line, raw) in lines.iter().zip(["c", "abcdefg", "abcde", "zzzzqqqq"]) {
        assert_eq!(line.replace(['#', '1', '2', '3'], ""), raw);
    }
    // output re-loads as a corpus: convert accepts every line
    ok(dir, &["convert", "--mode", "seq-to-tree", "--in", "pred.txt", "--out", "t.txt"]);
    ok(dir, &["predict", "--model", "run/model.ckpt", "--in", "raw.txt", "--out", "again.txt"]);
    assert_eq!(read(dir, "again.txt"), pred);
}

#[test]
fn bench_prints_one_row_per_length() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = ok(dir, &["--seed", "1", "bench", "--lengths", "5,10", "--trials", "3"]);
    let rows: Vec<&str> = out.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).collect();
    assert_eq!(rows.len(), 2);
    assert!(out.contains("ratio n=10/n=5"));
    fails(dir, &["bench", "--lengths", "1"]);
    fails(dir, &["bench", "--lengths", "4", "--trials", "0"]);
}

#[test]
fn failures_are_one_line() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let err = fails(dir, &["predict", "--model", "missing", "--in", "x.txt", "--out", "y.txt"]);
    assert!(err.contains("missing"), "{err}");
    let err = fails(dir, &["eval", "--pred", "nope.txt", "--gold", "nope.txt"]);
    assert!(err.contains("nope.txt"), "{err}");
    write(dir, "gen.cfg", "cue_strength = 2\n");
    fails(dir, &["gen", "--config", "gen.cfg", "--out", "c.txt"]);
    write(dir, "train.cfg", "unknown_key = 1\n");
    write(dir, "c.txt", "ab#3\n");
    fails(dir, &["train", "--config", "train.cfg", "--train", "c.txt", "--dev", "c.txt", "--out", "r"]);
}
