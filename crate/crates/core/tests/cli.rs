use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmprobe::data::{load_confounders, load_dataset, save_dataset, GrayImage, Label, LabeledDataset, Meme};

fn mmprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmprobe")).current_dir(dir).args(args).env_remove("PROBE_SEED").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mmprobe(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn gen_pair(dir: &Path) {
    ok(dir, &["gen", "--domain", "0", "--seed", "3", "--samples", "120", "--noise", "0.05", "--out", "a.jsonl"]);
    ok(dir, &["gen", "--domain", "1", "--seed", "3", "--samples", "120", "--noise", "0.05", "--out", "b.jsonl"]);
}

#[test]
fn help_lists_defaults_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmprobe(dir.path(), &["shapley", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in ["--dataset", "--predictor", "--mode", "--samples", "--seed", "--policy", "--out", "--cap", "--workers"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert!(help.contains("[default: 100]") && help.contains("PROBE_SEED"));
    assert!(mmprobe(dir.path(), &["--help"]).status.success());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmprobe(dir.path(), &["shapley", "--predictor", "patchint:100", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mmprobe(dir.path(), &["shapley", "--dataset", "x", "--predictor", "p", "--out", "o", "--mode", "fast"]).status.code(), Some(2));
    assert_eq!(mmprobe(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmprobe(dir.path(), &["eval", "--dataset", "missing.jsonl", "--predictor", "patchint:100", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    gen_pair(dir.path());
    let out = mmprobe(dir.path(), &["eval", "--dataset", "a.jsonl", "--predictor", "bogus:1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown predictor kind"));
}

#[test]
fn exact_mode_refuses_large_memes_after_writing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // 20 tokens -> 20 + 25 entities
    let text = (0..20).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let meme = Meme { id: "big".into(), text, image: GrayImage::filled(10, 10, 40), caption: None, celebrities: None, label: Label::Hateful };
    save_dataset(&LabeledDataset::new("big", vec![meme]).unwrap(), dir.path().join("big.jsonl")).unwrap();
    let out = mmprobe(dir.path(), &["shapley", "--dataset", "big.jsonl", "--predictor", "patchint:100", "--mode", "exact", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at most 14 entities"));
    let written: Vec<String> = files(&dir.path().join("o")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(written.len(), 1);
    assert!(written[0].starts_with("manifest_"));
}

#[test]
fn shapley_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    gen_pair(dir.path());
    std::fs::write(dir.path().join("lex.json"), r#"{"baba": 1.5}"#).unwrap();
    let args = |out: &'static str| {
        vec!["shapley", "--dataset", "a.jsonl", "--predictor", "fusion:0.6:lexicon:lex.json:patchint:100", "--mode", "mc", "--samples", "100", "--seed", "7", "--cap", "4", "--out", out]
    };
    ok(dir.path(), &args("run"));
    let first = files(&dir.path().join("run"));
    std::fs::remove_dir_all(dir.path().join("run")).unwrap();
    ok(dir.path(), &args("run"));
    assert_eq!(first, files(&dir.path().join("run")));
    // manifest + report + 3 artifacts per meme
    assert_eq!(first.len(), 2 + 4 * 3);
    let report = first.iter().find(|(n, _)| n.starts_with("attribution_")).unwrap();
    assert!(report.0.ends_with("_s7.json"));
    // worker count does not change results
    ok(dir.path(), &[&args("par")[..], &["--workers", "4"]].concat());
    let par = files(&dir.path().join("par"));
    let strip = |v: &[(String, Vec<u8>)]| v.iter().filter(|(n, _)| !n.starts_with("manifest_")).cloned().collect::<Vec<_>>();
    assert_eq!(strip(&first), strip(&par));
}

#[test]
fn matrix_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    gen_pair(dir.path());
    let args = ["matrix", "--datasets", "a.jsonl,b.jsonl", "--seed", "1", "--epochs", "60", "--out", "m"];
    let stdout = ok(dir.path(), &args);
    let first = files(&dir.path().join("m"));
    std::fs::remove_dir_all(dir.path().join("m")).unwrap();
    ok(dir.path(), &args);
    assert_eq!(first, files(&dir.path().join("m")));
    let (name, csv) = first.iter().find(|(n, _)| n.ends_with(".csv")).unwrap();
    assert!(name.starts_with("matrix_") && name.ends_with("_s1.csv"));
    assert_eq!(String::from_utf8_lossy(csv), stdout);
    assert!(stdout.starts_with("train\\test,a,b\n"));
}

#[test]
fn env_vars_fill_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mmprobe"));
        c.current_dir(dir.path()).args(["gen", "--samples", "10", "--out", "d.jsonl"]).args(extra);
        if let Some(seed) = env {
            c.env("PROBE_SEED", seed);
        }
        assert!(c.output().unwrap().status.success());
        std::fs::read(dir.path().join("d.jsonl")).unwrap()
    };
    let explicit = run(&["--seed", "9"], None);
    assert_eq!(run(&[], Some("9")), explicit);
    assert_eq!(run(&["--seed", "9"], Some("4")), explicit);
    assert_ne!(run(&[], Some("4")), explicit);
}

#[test]
fn gen_round_trips_through_load() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), r#"{"name": "toy", "samples": 40, "seed": 5}"#).unwrap();
    ok(dir.path(), &["gen", "--spec", "spec.json", "--out", "d.jsonl"]);
    let d = load_dataset(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(d.len(), 40);
    assert_eq!(d.class_counts(), [20, 20]);
    assert!(walk(dir.path()).iter().any(|p| p.file_name().unwrap().to_string_lossy().starts_with("manifest_")));

    ok(dir.path(), &["gen", "--confounders", "12", "--retain-rate", "0.25", "--seed", "2", "--out", "g.jsonl"]);
    let groups = load_confounders(dir.path().join("g.jsonl")).unwrap();
    assert_eq!(groups.len(), 12);
}

#[test]
fn agreement_prints_alpha() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("perfect.csv"), "1,0,1,0\n1,0,,0\n1,0,1,0\n").unwrap();
    assert_eq!(ok(dir.path(), &["agreement", "--csv", "perfect.csv"]).trim(), "alpha 1.0");
    std::fs::write(dir.path().join("flip.csv"), "a,b\nb,a\n").unwrap();
    assert_eq!(ok(dir.path(), &["agreement", "--csv", "flip.csv", "--out", "o"]).trim(), "alpha -0.5");
    assert_eq!(files(&dir.path().join("o")).len(), 2);
}

#[test]
fn train_eval_and_confounder_commands() {
    let dir = tempfile::tempdir().unwrap();
    gen_pair(dir.path());
    ok(dir.path(), &["train", "--dataset", "a.jsonl", "--epochs", "80", "--out", "t"]);
    let model = walk(&dir.path().join("t")).into_iter().find(|p| p.file_name().unwrap().to_string_lossy().starts_with("model_")).unwrap();
    let spec = format!("model:{}", model.display());
    let stdout = ok(dir.path(), &["eval", "--dataset", "a.jsonl", "--predictor", &spec, "--out", "e"]);
    assert!(stdout.starts_with("macro-F1 "));

    ok(dir.path(), &["gen", "--confounders", "20", "--seed", "4", "--out", "g.jsonl"]);
    let stdout = ok(dir.path(), &["confounder", "--groups", "g.jsonl", "--predictor", "patchint:100", "--out", "c"]);
    assert!(stdout.contains("dF1(T,I)"));
    assert_eq!(files(&dir.path().join("c")).len(), 2);

    let stdout = ok(dir.path(), &["caption-effect", "--datasets", "a.jsonl,b.jsonl", "--epochs", "30", "--out", "ce"]);
    assert!(stdout.contains("[both]"));
    assert_eq!(files(&dir.path().join("ce")).len(), 6);
}

fn bridge(args: &str) -> String {
    format!("python3 {}/tests/fixtures/bridge.py {args}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bridge_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["bridge-check", "--cmd", &bridge("echo")]);
    assert_eq!(out.lines().filter(|l| l.starts_with("ok request")).count(), 3);

    let out = mmprobe(dir.path(), &["bridge-check", "--cmd", &bridge("noreqid")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed response"));

    let out = mmprobe(dir.path(), &["bridge-check", "--cmd", &bridge("range 2.0")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score 2 outside [0, 1]"));
}
