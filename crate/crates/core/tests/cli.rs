use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddi_core::cli::{sha256_hex, RunManifest};

const TINY: &str = r#"version = "ddi-config/1"
word_dim = 6
char_dim = 4
char_filters = 3
hidden = 3
rel_windows = [2, 3]
rel_filters = 3
epochs = 2
dev_labels = 1
ensemble_size = 2
bootstrap_epochs = 2
bootstrap_max_iterations = 2
generator_labels = 3
generator_sentences_per_label = 6
"#;

fn ddi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddi")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ddi(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(p: &Path) -> RunManifest {
    let name = format!("{}.manifest.json", p.file_name().unwrap().to_str().unwrap());
    serde_json::from_slice(&std::fs::read(p.with_file_name(name)).unwrap()).unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.toml");
        std::fs::write(&config, TINY).unwrap();
        Workspace { _dir: dir, root, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn roundtrip_of_clean_generator_corpus_is_lossless() {
    let w = Workspace::new();
    let corpus = w.path("gold.json");
    ok(&["generate", s(&corpus), "--config", s(&w.config), "--seed", "4"]);
    let out = ok(&["roundtrip", s(&corpus), s(&w.path("rt.json")), "--config", s(&w.config)]);
    let primary: Vec<&str> = out.lines().filter(|l| l.contains("primary")).take(2).collect();
    assert_eq!(primary.len(), 2);
    for line in primary {
        assert!(line.trim_end().ends_with("100.00"), "{line}");
    }
    let m = manifest(&w.path("rt.json"));
    assert_eq!(m.command, "roundtrip");
    assert_eq!(m.inputs[s(&corpus)], sha256_hex(&std::fs::read(&corpus).unwrap()));
}

#[test]
fn train_predict_merge_score_pipeline() {
    let w = Workspace::new();
    let gold = w.path("gold.json");
    ok(&["generate", s(&gold), "--config", s(&w.config), "--seed", "2"]);
    for run in ["a", "b"] {
        ok(&["train", s(&gold), s(&w.path(run)), "--config", s(&w.config), "--seed", "9", "--workers", "1"]);
    }
    for i in 0..2 {
        let name = format!("model-{i:02}.json");
        assert_eq!(std::fs::read(w.path("a").join(&name)).unwrap(), std::fs::read(w.path("b").join(&name)).unwrap());
    }
    let m = manifest(&w.path("a"));
    assert_eq!((m.command.as_str(), m.seed, m.outputs.len()), ("train", 9, 4));

    let mut preds = Vec::new();
    for i in 0..2 {
        let p = w.path(&format!("pred-{i}.json"));
        let ckpt = w.path("a").join(format!("model-{i:02}.json"));
        ok(&["predict", s(&ckpt), s(&gold), s(&p)]);
        preds.push(p);
    }
    let merged = w.path("merged.json");
    let out = ok(&["ensemble-merge", s(&merged), s(&preds[0]), s(&preds[1]), "--min-votes", "1"]);
    assert!(out.starts_with("k\t2\n"), "{out}");
    assert!(w.path("merged.json.tally.txt").exists());
    let table = ok(&["score", s(&gold), s(&merged), s(&w.path("score.json"))]);
    assert_eq!(table.lines().count(), 5);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(w.path("score.json")).unwrap()).unwrap();
    assert_eq!(report["score"]["scores"].as_array().unwrap().len(), 4);
}

#[test]
fn encode_writes_tags_and_bootstrap_writes_review_queue() {
    let w = Workspace::new();
    let gold = w.path("gold.json");
    ok(&["generate", s(&gold), "--config", s(&w.config), "--set", "generator_labels=6"]);
    ok(&["encode", s(&gold), s(&w.path("tags.json"))]);
    let tags: serde_json::Value = serde_json::from_slice(&std::fs::read(w.path("tags.json")).unwrap()).unwrap();
    assert_eq!(tags["sequences"].as_array().unwrap().len(), 36);

    let pending = w.path("pending.json");
    ok(&["generate", s(&pending), "--config", s(&w.config), "--seed", "1"]);
    let text = std::fs::read_to_string(&pending).unwrap();
    let mut corpus: ddi_core::corpus::CorpusFile = serde_json::from_str(&text).unwrap();
    let codes = ddi_core::annot::CodeVocabulary::placeholder();
    corpus = ddi_core::corpus::generator::hide_pk_codes(&corpus, &codes).0;
    std::fs::write(&pending, ddi_core::corpus::serialize_corpus(&corpus)).unwrap();
    let out = w.path("resolved.json");
    ok(&["bootstrap", s(&gold), s(&pending), s(&out), "--config", s(&w.config)]);
    assert!(out.exists());
    assert!(w.path("resolved.json.review.tsv").exists());
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let w = Workspace::new();
    assert_eq!(ddi(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(ddi(&["generate", s(&w.path("x.json")), "--set", "epochz=1"]).status.code(), Some(1));
    let bad = w.path("bad.toml");
    std::fs::write(&bad, "version = \"ddi-config/1\"\nunknown_key = 1\n").unwrap();
    assert_eq!(ddi(&["generate", s(&w.path("x.json")), "--config", s(&bad)]).status.code(), Some(1));
    let missing = ddi(&["score", s(&w.path("nope.json")), s(&w.path("nope.json")), s(&w.path("o.json"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));
    std::fs::write(w.path("junk.json"), "{").unwrap();
    let junk = w.path("junk.json");
    assert_eq!(ddi(&["score", s(&junk), s(&junk), s(&w.path("o.json"))]).status.code(), Some(2));
}

#[test]
fn help_documents_every_subcommand_flag() {
    for (sub, flags) in ddi_core::cli::documented_flags() {
        let help = ok(&[&sub, "--help"]);
        for (flag, text) in flags {
            if flag.starts_with("--") {
                assert!(help.contains(&flag), "{sub} --help omits {flag}");
            }
            assert!(!text.is_empty() || flag == "help" || flag == "--help" || flag == "--version", "{sub} {flag}");
        }
    }
}
