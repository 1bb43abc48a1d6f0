use std::ffi::{CStr, CString};
use std::ptr;

use pcfg_em_ffi::*;

const G0: &str = "S -> S S 0.5\nS -> \"a\" 0.5\n";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn grammar(text: &str) -> *mut PcfgGrammar {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { pcfg_grammar_parse(c(text).as_ptr(), false, &mut g) }, PcfgStatus::Ok);
    assert!(!g.is_null());
    g
}

fn corpus(text: &str) -> *mut PcfgCorpus {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { pcfg_corpus_load(c(text).as_ptr(), &mut k) }, PcfgStatus::Ok);
    k
}

fn last_error() -> String {
    let p = pcfg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn probs(g: *const PcfgGrammar) -> Vec<f64> {
    let mut n = 0;
    assert_eq!(unsafe { pcfg_grammar_rule_count(g, &mut n) }, PcfgStatus::Ok);
    (0..n)
        .map(|i| {
            let mut p = 0.0;
            assert_eq!(unsafe { pcfg_grammar_rule_prob(g, i, &mut p) }, PcfgStatus::Ok);
            p
        })
        .collect()
}

#[test]
fn sentence_probability_and_text() {
    let g = grammar(G0);
    let mut p = 0.0;
    assert_eq!(unsafe { pcfg_sentence_prob(g, c("a a").as_ptr(), &mut p) }, PcfgStatus::Ok);
    assert_eq!(p, 0.125);
    assert_eq!(unsafe { pcfg_sentence_prob(g, c("b").as_ptr(), &mut p) }, PcfgStatus::Ok);
    assert_eq!(p, 0.0);

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { pcfg_grammar_to_text(g, &mut text) }, PcfgStatus::Ok);
    let owned = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(owned.contains("S -> S S 0.5"));
    unsafe { pcfg_string_free(text) };

    let mut rule = ptr::null_mut();
    assert_eq!(unsafe { pcfg_grammar_rule_text(g, 1, &mut rule) }, PcfgStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(rule) }.to_str().unwrap(), "S -> \"a\"");
    unsafe { pcfg_string_free(rule) };

    let mut valid = false;
    assert_eq!(unsafe { pcfg_grammar_is_valid(g, &mut valid) }, PcfgStatus::Ok);
    assert!(valid);
    unsafe { pcfg_grammar_free(g) };
}

#[test]
fn reestimation_and_enumeration_step_agree() {
    let g = grammar(G0);
    let k = corpus("a a\n");
    let mut chart = ptr::null_mut();
    let mut trees = ptr::null_mut();
    assert_eq!(unsafe { pcfg_reestimate(g, k, false, 2, &mut chart) }, PcfgStatus::Ok);
    assert_eq!(unsafe { pcfg_em_step_enumerated(g, k, 1000, &mut trees) }, PcfgStatus::Ok);
    let (a, b) = (probs(chart), probs(trees));
    assert!((a[0] - 1.0 / 3.0).abs() < 1e-12 && (a[1] - 2.0 / 3.0).abs() < 1e-12);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }

    let (mut ll, mut skipped) = (0.0, 99);
    assert_eq!(unsafe { pcfg_log_likelihood(chart, k, true, &mut ll, &mut skipped) }, PcfgStatus::Ok);
    assert!((ll - (4.0f64 / 27.0).ln()).abs() < 1e-12);
    assert_eq!(skipped, 0);

    let mut mismatches = 99;
    assert_eq!(unsafe { pcfg_check(g, k, 1000, 1e-9, &mut mismatches) }, PcfgStatus::Ok);
    assert_eq!(mismatches, 0);

    unsafe {
        pcfg_grammar_free(chart);
        pcfg_grammar_free(trees);
        pcfg_grammar_free(g);
        pcfg_corpus_free(k);
    }
}

#[test]
fn training_summary() {
    let g = grammar(G0);
    let k = corpus("a a\na a a\n");
    let mut types = 0;
    assert_eq!(unsafe { pcfg_corpus_type_count(k, &mut types) }, PcfgStatus::Ok);
    assert_eq!(types, 2);

    let options = PcfgTrainOptions { max_iters: 10, epsilon: 0.0, ..pcfg_train_options_default() };
    let mut trained = ptr::null_mut();
    let mut summary = PcfgTrainSummary::default();
    assert_eq!(unsafe { pcfg_train(g, k, &options, &mut trained, &mut summary) }, PcfgStatus::Ok);
    assert_eq!(summary.iterations, 10);
    assert!(!summary.converged);
    assert!(summary.final_log_likelihood >= summary.initial_log_likelihood);

    // summary is optional
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { pcfg_train(g, k, &options, &mut again, ptr::null_mut()) }, PcfgStatus::Ok);
    assert_eq!(probs(trained), probs(again));
    unsafe {
        pcfg_grammar_free(trained);
        pcfg_grammar_free(again);
        pcfg_grammar_free(g);
        pcfg_corpus_free(k);
    }
}

#[test]
fn errors_are_reported() {
    let mut g = ptr::null_mut();
    let status = unsafe { pcfg_grammar_parse(c("S -> S S 0.6\nS -> \"a\" 0.5\n").as_ptr(), false, &mut g) };
    assert_eq!(status, PcfgStatus::GrammarError);
    assert!(g.is_null());
    assert!(last_error().contains("1.1"), "{}", last_error());

    let status = unsafe { pcfg_grammar_parse(c("S -> S S 0.6\nS -> \"a\" 0.6\n").as_ptr(), true, &mut g) };
    assert_eq!(status, PcfgStatus::Ok);
    assert!(pcfg_last_error().is_null());
    assert_eq!(probs(g), vec![0.5, 0.5]);

    let mut p = 0.0;
    assert_eq!(unsafe { pcfg_grammar_rule_prob(g, 7, &mut p) }, PcfgStatus::IndexOutOfRange);
    assert_eq!(unsafe { pcfg_sentence_prob(g, ptr::null(), &mut p) }, PcfgStatus::NullPointer);
    assert_eq!(unsafe { pcfg_sentence_prob(ptr::null(), c("a").as_ptr(), &mut p) }, PcfgStatus::NullPointer);
    assert_eq!(unsafe { pcfg_sentence_prob(g, c("a").as_ptr(), ptr::null_mut()) }, PcfgStatus::NullPointer);

    let invalid = [0xffu8, 0];
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { pcfg_corpus_load(invalid.as_ptr().cast(), &mut k) }, PcfgStatus::InvalidUtf8);
    assert_eq!(unsafe { pcfg_corpus_load(c("\n\n").as_ptr(), &mut k) }, PcfgStatus::CorpusError);

    let unparseable = corpus("b\n");
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pcfg_reestimate(g, unparseable, false, 1, &mut out) }, PcfgStatus::EstimationError);
    assert_eq!(unsafe { pcfg_em_step_enumerated(g, unparseable, 10, &mut out) }, PcfgStatus::OracleError);
    let long = corpus("a a a a a a a\n");
    assert_eq!(unsafe { pcfg_em_step_enumerated(g, long, 10, &mut out) }, PcfgStatus::OracleError);
    assert!(last_error().contains("10"));

    unsafe {
        pcfg_grammar_free(g);
        pcfg_corpus_free(unparseable);
        pcfg_corpus_free(long);
        pcfg_grammar_free(ptr::null_mut());
        pcfg_corpus_free(ptr::null_mut());
        pcfg_string_free(ptr::null_mut());
    }
}
