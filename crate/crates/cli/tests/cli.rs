//! End-to-end runs of the `gecc` binary against tiny fixtures.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gecc::codes::{load_codes, ThresholdMode};

fn gecc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gecc"))
        .args(args)
        .output()
        .expect("spawn gecc")
}

fn ok(args: &[&str]) -> String {
    let out = gecc(args);
    assert!(
        out.status.success(),
        "gecc {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = gecc(args);
    assert!(!out.status.success(), "gecc {args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic not single-line: {err}");
    err
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn make_emb(dir: &Path) -> String {
    let out = p(dir, "emb.gef32");
    ok(&[
        "synth-emb",
        "--clusters", "2",
        "--points-per-cluster", "8",
        "--dim", "6",
        "--out", &out,
    ]);
    out
}

#[test]
fn encode_writes_the_header_it_was_given() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let out = p(dir.path(), "codes.gecc");
    let stdout = ok(&[
        "encode", "--dense", &emb, "--c", "256", "--m", "16", "--seed", "7", "--out", &out,
    ]);
    assert!(stdout.contains("resolved-config: cmd=encode"));
    assert!(stdout.contains("threshold=median"));
    let (codes, seed, mode) = load_codes(Path::new(&out)).unwrap();
    assert_eq!((codes.n, codes.c, codes.m), (16, 256, 16));
    assert_eq!(seed, 7);
    assert_eq!(mode, ThresholdMode::Median);
}

#[test]
fn encode_rejects_non_power_of_two_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let err = fails(&[
        "encode", "--dense", &emb, "--c", "3", "--m", "4",
        "--out", &p(dir.path(), "x.gecc"),
    ]);
    assert!(err.contains("power of two"), "got: {err}");
}

#[test]
fn encode_requires_exactly_one_input() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let out = p(dir.path(), "x.gecc");
    let err = fails(&["encode", "--c", "4", "--m", "4", "--out", &out]);
    assert!(err.contains("--edges or --dense"), "got: {err}");
    let err = fails(&[
        "encode", "--dense", &emb, "--edges", &emb, "--c", "4", "--m", "4", "--out", &out,
    ]);
    assert!(err.contains("not both"), "got: {err}");
    let err = fails(&["encode", "--dense", &emb, "--m", "4", "--out", &out]);
    assert!(err.contains("c is required"), "got: {err}");
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# encode settings\nc = 8\nm = 4\nseed = 9\nthreshold = zero\ndense = {emb}\nout = {}\n", p(dir.path(), "a.gecc")),
    )
    .unwrap();
    let stdout = ok(&["encode", "--config", cfg.to_str().unwrap(), "--m", "2"]);
    assert!(stdout.contains(" c=8 m=2 "), "got: {stdout}");
    let (codes, seed, mode) = load_codes(&dir.path().join("a.gecc")).unwrap();
    assert_eq!((codes.c, codes.m, seed), (8, 2, 9));
    assert_eq!(mode, ThresholdMode::Zero);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("dense = {emb}\nc = 8\nm = 4\nout = {}\nbogus = 1\n", p(dir.path(), "x.gecc")),
    )
    .unwrap();
    let err = fails(&["encode", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("unknown config keys: bogus"), "got: {err}");
}

#[test]
fn encode_streamed_and_in_memory_agree_and_reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let a = p(dir.path(), "a.gecc");
    let b = p(dir.path(), "b.gecc");
    let c = p(dir.path(), "c.gecc");
    let base = ["--c", "16", "--m", "8", "--seed", "3"];
    let mut args = vec!["encode", "--dense", &emb];
    args.extend_from_slice(&base);
    ok(&[args.clone(), vec!["--out", &a]].concat());
    ok(&[args.clone(), vec!["--out", &b, "--stream"]].concat());
    ok(&[args.clone(), vec!["--out", &c]].concat());
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_eq!(bytes, fs::read(&c).unwrap());
}

#[test]
fn collisions_writes_csv_with_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let csv = p(dir.path(), "coll.csv");
    let stdout = ok(&[
        "collisions", "--dense", &emb, "--bits", "8", "--trials", "5", "--out", &csv,
    ]);
    assert!(stdout.contains("mean_median="));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,median_collisions,zero_collisions"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn train_recon_runs_deterministically_and_checks_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let emb = make_emb(dir.path());
    let codes = p(dir.path(), "codes.gecc");
    ok(&["encode", "--dense", &emb, "--c", "4", "--m", "4", "--out", &codes]);

    let run = |tag: &str| {
        let ckpt = p(dir.path(), &format!("{tag}.ckpt"));
        let log = p(dir.path(), &format!("{tag}.csv"));
        let stdout = ok(&[
            "train-recon",
            "--codes", &codes,
            "--targets", &emb,
            "--d-c", "8", "--d-m", "8", "--layers", "2",
            "--epochs", "5", "--batch-size", "8",
            "--out", &ckpt,
            "--loss-log", &log,
        ]);
        assert!(stdout.contains("final_mse="), "got: {stdout}");
        (fs::read(&log).unwrap(), fs::read(format!("{ckpt}.bin")).unwrap())
    };
    let (log1, bin1) = run("a");
    let (log2, bin2) = run("b");
    assert_eq!(log1, log2);
    assert_eq!(bin1, bin2);
    let text = String::from_utf8(log1).unwrap();
    assert_eq!(text.lines().next(), Some("epoch,mse"));
    assert_eq!(text.lines().count(), 6);
    for line in text.lines().skip(1) {
        let mse: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(mse.is_finite());
    }

    // Mismatched row counts are a config error, caught before training.
    let small = p(dir.path(), "small.gef32");
    ok(&["synth-emb", "--clusters", "2", "--points-per-cluster", "2", "--dim", "6", "--out", &small]);
    let err = fails(&[
        "train-recon", "--codes", &codes, "--targets", &small,
        "--out", &p(dir.path(), "x.ckpt"), "--loss-log", &p(dir.path(), "x.csv"),
    ]);
    assert!(err.contains("target rows"), "got: {err}");
}

#[test]
fn train_node_separates_disconnected_cliques_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let edges = p(dir.path(), "e.txt");
    let labels = p(dir.path(), "l.txt");
    let splits = p(dir.path(), "s.txt");
    ok(&[
        "synth-sbm",
        "--communities", "2",
        "--nodes-per-community", "10",
        "--p-in", "1.0", "--p-out", "0.0",
        "--edges-out", &edges,
        "--labels-out", &labels,
        "--splits-out", &splits,
        "--train-frac", "0.6", "--valid-frac", "0.2",
    ]);
    let codes = p(dir.path(), "codes.gecc");
    ok(&["encode", "--edges", &edges, "--c", "4", "--m", "8", "--out", &codes]);

    let args = [
        "train-node",
        "--edges", &edges,
        "--codes", &codes,
        "--labels", &labels,
        "--splits", &splits,
        "--d-c", "8", "--d-m", "8", "--d-e", "8", "--layers", "2",
        "--hidden", "8", "--k", "3", "--epochs", "10",
    ];
    let run1 = ok(&args);
    let run2 = ok(&args);
    assert_eq!(run1, run2);
    let last = run1.lines().last().unwrap();
    assert!(last.starts_with("best_epoch="), "got: {last}");
    assert!(last.contains("test_accuracy=1.0000"), "got: {last}");
    assert_eq!(run1.matches("epoch=").count(), 11, "one line per epoch plus summary");
}

#[test]
fn mem_report_prints_the_pinned_deployment_numbers() {
    let stdout = ok(&[
        "mem-report", "--n", "1871031", "--d-e", "64", "--c", "256", "--m", "16",
    ]);
    assert!(stdout.contains("456.79"), "got: {stdout}");
    assert!(stdout.contains("28.55"), "got: {stdout}");
    let raw = stdout.lines().find(|l| l.starts_with("raw")).unwrap();
    assert!(raw.ends_with("1.00"), "raw ratio row: {raw}");
}

#[test]
fn synth_outputs_cover_every_node() {
    let dir = tempfile::tempdir().unwrap();
    let edges = p(dir.path(), "e.txt");
    let labels = p(dir.path(), "l.txt");
    let splits = p(dir.path(), "s.txt");
    ok(&[
        "synth-sbm",
        "--communities", "3",
        "--nodes-per-community", "5",
        "--p-in", "0.9", "--p-out", "0.1",
        "--edges-out", &edges,
        "--labels-out", &labels,
        "--splits-out", &splits,
    ]);
    let labels_text = fs::read_to_string(&labels).unwrap();
    assert_eq!(labels_text.lines().count(), 15);
    let splits_text = fs::read_to_string(&splits).unwrap();
    assert_eq!(splits_text.lines().count(), 15);
    for tag in ["train", "valid", "test"] {
        assert!(splits_text.lines().any(|l| l.ends_with(tag)), "missing {tag}");
    }
}
