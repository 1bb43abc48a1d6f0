use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

const G0: &str = "S -> S S 0.5\nS -> \"a\" 0.5\n";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn file(&self, name: &str, contents: &str) -> String {
        let path: PathBuf = self.dir.path().join(name);
        fs::write(&path, contents).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfg-em")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn assert_error(o: &Output) {
    assert_eq!(o.status.code(), Some(1), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert!(err.lines().any(|l| l.starts_with("error: ")), "no error line in {err:?}");
    assert_eq!(err.lines().filter(|l| l.starts_with("error:")).count(), 1);
}

#[test]
fn validate_accepts_g0() {
    let ws = Workspace::new();
    let o = run(&["validate", "--grammar", &ws.file("g0.pcfg", G0)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "OK\n");
}

#[test]
fn validate_reports_bad_sums() {
    let ws = Workspace::new();
    let g = ws.file("bad.pcfg", "S -> S S 0.6\nS -> \"a\" 0.5\n");
    let o = run(&["validate", "--grammar", &g]);
    assert_error(&o);
    assert!(stdout(&o).contains("S distribution sums to 1.1"));
}

#[test]
fn inside_prints_sentence_probability() {
    let ws = Workspace::new();
    let o = run(&["inside", "--grammar", &ws.file("g0.pcfg", G0), "--sentence", "a a"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "P 0.125\n");
}

#[test]
fn inside_tables_list_chart_cells() {
    let ws = Workspace::new();
    let o = run(&["inside", "--grammar", &ws.file("g0.pcfg", G0), "--sentence", "a a", "--tables"]);
    let out = stdout(&o);
    assert!(out.contains("e 1 2 S 0.125\n"));
    assert!(out.contains("f 1 2 S 1\n"));
    assert!(out.contains("f 1 1 S 0.25\n"));
}

#[test]
fn counts_for_one_sentence() {
    let ws = Workspace::new();
    let o = run(&["counts", "--grammar", &ws.file("g0.pcfg", G0), "--sentence", "a a"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "rule S S S 1\nrule S \"a\" 2\ncat S 3\n");
}

#[test]
fn counts_strict_rejects_unparseable_corpus() {
    let ws = Workspace::new();
    let g = ws.file("g0.pcfg", G0);
    let c = ws.file("c.txt", "a a\nb\n");
    let lenient = run(&["counts", "--grammar", &g, "--corpus", &c]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(stderr(&lenient).starts_with("warning:"));
    assert_error(&run(&["counts", "--grammar", &g, "--corpus", &c, "--strict"]));
}

#[test]
fn parse_lists_trees_in_canonical_order() {
    let ws = Workspace::new();
    let o = run(&["parse", "--grammar", &ws.file("g0.pcfg", G0), "--sentence", "a a a"]);
    assert_eq!(stdout(&o), "(S (S a) (S (S a) (S a))) 0.03125\n(S (S (S a) (S a)) (S a)) 0.03125\n");
}

#[test]
fn parse_respects_cap() {
    let ws = Workspace::new();
    let o = run(&["parse", "--grammar", &ws.file("g0.pcfg", G0), "--sentence", "a a a a a", "--cap", "10"]);
    assert_error(&o);
}

#[test]
fn train_writes_report_and_grammar() {
    let ws = Workspace::new();
    let out = ws.path("trained.pcfg");
    let o = run(&[
        "train",
        "--grammar",
        &ws.file("g0.pcfg", G0),
        "--corpus",
        &ws.file("c.txt", "a a\n"),
        "--max-iters",
        "3",
        "--epsilon",
        "0",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = stdout(&o);
    let first = report.lines().next().unwrap();
    assert!(first.starts_with("iter 1 loglik "), "{first}");
    assert!(first.ends_with(" skipped 0"));
    let loglik: f64 = first.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!((loglik - (4.0f64 / 27.0).ln()).abs() < 1e-12);
    assert_eq!(report.lines().filter(|l| l.starts_with("iter ")).count(), 3);

    let trained = fs::read_to_string(&out).unwrap();
    let g: pcfg_em::Grammar = trained.parse().unwrap();
    assert_eq!(g.probs(), &[1.0 / 3.0, 2.0 / 3.0]);
}

#[test]
fn trained_grammar_round_trips_exactly() {
    let ws = Workspace::new();
    let out = ws.path("trained.pcfg");
    let grammar = ws.file("g.pcfg", "S -> S S 0.3\nS -> S A 0.2\nS -> \"a\" 0.5\nA -> \"a\" 0.7\nA -> \"b\" 0.3\n");
    let corpus = ws.file("c.txt", "a b\na a b\na a\na b a b\n");
    let o = run(&["train", "--grammar", &grammar, "--corpus", &corpus, "--max-iters", "4", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    let g: pcfg_em::Grammar = text.parse().unwrap();
    assert_eq!(g.to_text(), text);
}

#[test]
fn check_passes_and_fault_injection_fails() {
    let ws = Workspace::new();
    let g = ws.file("g0.pcfg", G0);
    let c = ws.file("c.txt", "a a\na a a\na\n");
    let ok = run(&["check", "--grammar", &g, "--corpus", &c]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).starts_with("OK "));

    let bad = run(&["check", "--grammar", &g, "--corpus", &c, "--perturb-rule", "S -> S S"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("S -> S S"));
    assert!(stdout(&bad).contains("mismatch"));
}

#[test]
fn perplexity_of_g0() {
    let ws = Workspace::new();
    let o = run(&["perplexity", "--grammar", &ws.file("g0.pcfg", G0), "--corpus", &ws.file("c.txt", "a a\n")]);
    let out = stdout(&o);
    let value = |key: &str| -> f64 { out.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim().parse().unwrap() };
    assert_eq!(value("loglik "), 0.125f64.ln());
    assert!((value("perplexity ") - 8.0).abs() < 1e-12);
}

#[test]
fn error_paths_exit_one_with_prefix() {
    let ws = Workspace::new();
    let g = ws.file("g0.pcfg", G0);
    assert_error(&run(&["frobnicate"]));
    assert_error(&run(&[]));
    assert_error(&run(&["inside", "--grammar", &ws.path("missing.pcfg"), "--sentence", "a"]));
    assert_error(&run(&["inside", "--grammar", &g]));
    assert_error(&run(&["train", "--grammar", &g, "--corpus", &ws.file("empty.txt", "\n"), "--out", &ws.path("x")]));
    assert_error(&run(&["train", "--grammar", &g, "--corpus", &ws.file("b.txt", "b\n"), "--out", &ws.path("x")]));
}

#[test]
fn malformed_grammar_names_file_and_line() {
    let ws = Workspace::new();
    let g = ws.file("broken.pcfg", "S -> S S 0.5\nS -> a 0.5\n");
    let o = run(&["inside", "--grammar", &g, "--sentence", "a"]);
    assert_error(&o);
    let err = stderr(&o);
    assert!(err.contains("broken.pcfg"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn help_documents_file_formats() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("Grammar file"));
    assert!(out.contains("Corpus file"));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    let g = ws.file("g0.pcfg", G0);
    let c = ws.file("c.txt", "a a\na a a a\na\n");
    let a = run(&["counts", "--grammar", &g, "--corpus", &c, "--per-sentence"]);
    let b = run(&["counts", "--grammar", &g, "--corpus", &c, "--per-sentence", "--jobs", "3"]);
    assert_eq!(a.stdout, b.stdout);
}
