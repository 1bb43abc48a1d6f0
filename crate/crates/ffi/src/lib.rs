//! C ABI over `pcfg-em`.
//!
//! Grammars and corpora cross the boundary as opaque handles created by
//! `pcfg_*_parse` / `pcfg_corpus_load` and released with the matching
//! `_free` function. Every fallible call returns a [`PcfgStatus`]; on
//! failure `pcfg_last_error()` describes the problem. Strings returned to
//! the caller are owned by the caller and must be released with
//! `pcfg_string_free`.
//!
//! Handles are immutable once created and may be shared between threads.
//! The last-error slot is per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pcfg_em::cli::{differential_check, CheckOptions};
use pcfg_em::estimation::{self, StepOptions, StopReason, TrainConfig};
use pcfg_em::grammar::{parse_grammar_with, validate_cnf, Grammar, Normalization, ParseOptions, RuleId};
use pcfg_em::oracle;
use pcfg_em::{analyze, load_corpus, Corpus, Sentence};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcfgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    GrammarError = 3,
    CorpusError = 4,
    EstimationError = 5,
    OracleError = 6,
    IndexOutOfRange = 7,
    Panic = 8,
}

/// Opaque grammar handle.
pub struct PcfgGrammar {
    inner: Grammar,
}

/// Opaque corpus handle.
pub struct PcfgCorpus {
    inner: Corpus,
}

/// Training parameters; obtain defaults from `pcfg_train_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PcfgTrainOptions {
    pub max_iters: usize,
    pub epsilon: f64,
    pub strict: bool,
    pub jobs: usize,
}

/// Summary of a training run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PcfgTrainSummary {
    pub iterations: usize,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub converged: bool,
    pub zero_rules: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (PcfgStatus, String);

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F>(f: F) -> PcfgStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcfgStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PcfgStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    (PcfgStatus::NullPointer, format!("{name} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (PcfgStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(null(name))
    } else {
        Ok(p)
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn into_c_string(text: String) -> Result<*mut c_char, Failure> {
    CString::new(text).map(CString::into_raw).map_err(|_| (PcfgStatus::InvalidUtf8, "string contains NUL".to_string()))
}

/// Message for the most recent failed call on this thread, or NULL. The
/// pointer stays valid until the next `pcfg_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pcfg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pcfg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses grammar file text. Unnormalized distributions are rejected unless
/// `renormalize` is set.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_parse(
    text: *const c_char,
    renormalize: bool,
    out: *mut *mut PcfgGrammar,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let normalization = if renormalize { Normalization::Renormalize } else { Normalization::Require };
        let grammar = parse_grammar_with(text, ParseOptions { normalization })
            .map_err(|e| (PcfgStatus::GrammarError, e.to_string()))?;
        *out = boxed(PcfgGrammar { inner: grammar });
        Ok(())
    })
}

/// # Safety
/// `grammar` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_free(grammar: *mut PcfgGrammar) {
    if !grammar.is_null() {
        drop(Box::from_raw(grammar));
    }
}

/// Grammar file text; free with `pcfg_string_free`.
///
/// # Safety
/// `grammar` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_to_text(grammar: *const PcfgGrammar, out: *mut *mut c_char) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grammar = ref_arg(grammar, "grammar")?;
        *out = into_c_string(grammar.inner.to_text())?;
        Ok(())
    })
}

/// # Safety
/// `grammar` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_rule_count(grammar: *const PcfgGrammar, out: *mut usize) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ref_arg(grammar, "grammar")?.inner.rules().len();
        Ok(())
    })
}

/// Probability of the rule at position `index` in file order.
///
/// # Safety
/// `grammar` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_rule_prob(
    grammar: *const PcfgGrammar,
    index: usize,
    out: *mut f64,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grammar = &ref_arg(grammar, "grammar")?.inner;
        if index >= grammar.rules().len() {
            return Err((
                PcfgStatus::IndexOutOfRange,
                format!("rule index {index} out of range (grammar has {} rules)", grammar.rules().len()),
            ));
        }
        *out = grammar.prob(RuleId(index));
        Ok(())
    })
}

/// Rule at position `index` rendered as `A -> B C` or `A -> "a"`; free with
/// `pcfg_string_free`.
///
/// # Safety
/// `grammar` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_rule_text(
    grammar: *const PcfgGrammar,
    index: usize,
    out: *mut *mut c_char,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grammar = &ref_arg(grammar, "grammar")?.inner;
        if index >= grammar.rules().len() {
            return Err((PcfgStatus::IndexOutOfRange, format!("rule index {index} out of range")));
        }
        *out = into_c_string(grammar.display_rule(RuleId(index)))?;
        Ok(())
    })
}

/// Sets `*out` to whether every LHS distribution sums to 1 within 1e-9.
///
/// # Safety
/// `grammar` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_grammar_is_valid(grammar: *const PcfgGrammar, out: *mut bool) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = validate_cnf(&ref_arg(grammar, "grammar")?.inner).is_valid();
        Ok(())
    })
}

/// Parses corpus text: one sentence per line, whitespace-separated tokens.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_corpus_load(text: *const c_char, out: *mut *mut PcfgCorpus) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = load_corpus(str_arg(text, "text")?).map_err(|e| (PcfgStatus::CorpusError, e.to_string()))?;
        *out = boxed(PcfgCorpus { inner: corpus });
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pcfg_corpus_free(corpus: *mut PcfgCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of distinct sentences in the corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_corpus_type_count(corpus: *const PcfgCorpus, out: *mut usize) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ref_arg(corpus, "corpus")?.inner.types().len();
        Ok(())
    })
}

/// Inside probability of a whitespace-tokenized sentence; 0 if it has no
/// parse.
///
/// # Safety
/// `grammar` must be a live handle, `sentence` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_sentence_prob(
    grammar: *const PcfgGrammar,
    sentence: *const c_char,
    out: *mut f64,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grammar = &ref_arg(grammar, "grammar")?.inner;
        let sentence =
            Sentence::parse(str_arg(sentence, "sentence")?).map_err(|e| (PcfgStatus::CorpusError, e.to_string()))?;
        *out = analyze(grammar, &sentence).prob;
        Ok(())
    })
}

/// Frequency-weighted mean natural-log sentence probability. Sentences
/// with probability 0 are excluded and counted in `*out_skipped`; with
/// `strict` any such sentence yields `-inf`.
///
/// # Safety
/// Handles must be live; `out_value` and `out_skipped` writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_log_likelihood(
    grammar: *const PcfgGrammar,
    corpus: *const PcfgCorpus,
    strict: bool,
    out_value: *mut f64,
    out_skipped: *mut usize,
) -> PcfgStatus {
    guard(|| {
        let out_value = out_arg(out_value, "out_value")?;
        let out_skipped = out_arg(out_skipped, "out_skipped")?;
        let ll =
            estimation::log_likelihood(&ref_arg(grammar, "grammar")?.inner, &ref_arg(corpus, "corpus")?.inner, strict);
        *out_value = ll.value;
        *out_skipped = ll.skipped;
        Ok(())
    })
}

/// One inside-outside re-estimation step; `*out` receives a new handle.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_reestimate(
    grammar: *const PcfgGrammar,
    corpus: *const PcfgCorpus,
    strict: bool,
    jobs: usize,
    out: *mut *mut PcfgGrammar,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let step = estimation::reestimate_with(
            &ref_arg(grammar, "grammar")?.inner,
            &ref_arg(corpus, "corpus")?.inner,
            &StepOptions { strict, jobs },
        )
        .map_err(|e| (PcfgStatus::EstimationError, e.to_string()))?;
        *out = boxed(PcfgGrammar { inner: step.grammar });
        Ok(())
    })
}

/// One EM step computed by explicit parse-tree enumeration (at most `cap`
/// trees per sentence); `*out` receives a new handle.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_em_step_enumerated(
    grammar: *const PcfgGrammar,
    corpus: *const PcfgCorpus,
    cap: usize,
    out: *mut *mut PcfgGrammar,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let next = oracle::em_step(&ref_arg(grammar, "grammar")?.inner, &ref_arg(corpus, "corpus")?.inner, cap)
            .map_err(|e| (PcfgStatus::OracleError, e.to_string()))?;
        *out = boxed(PcfgGrammar { inner: next });
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn pcfg_train_options_default() -> PcfgTrainOptions {
    let d = TrainConfig::default();
    PcfgTrainOptions { max_iters: d.max_iters, epsilon: d.epsilon, strict: d.strict, jobs: d.jobs }
}

/// Iterated re-estimation. `*out_grammar` receives the trained grammar;
/// `out_summary` may be NULL.
///
/// # Safety
/// Handles and `options` must be valid; `out_grammar` writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_train(
    grammar: *const PcfgGrammar,
    corpus: *const PcfgCorpus,
    options: *const PcfgTrainOptions,
    out_grammar: *mut *mut PcfgGrammar,
    out_summary: *mut PcfgTrainSummary,
) -> PcfgStatus {
    guard(|| {
        let out_grammar = out_arg(out_grammar, "out_grammar")?;
        let options = ref_arg(options, "options")?;
        let config = TrainConfig {
            max_iters: options.max_iters,
            epsilon: options.epsilon,
            strict: options.strict,
            jobs: options.jobs,
            ..TrainConfig::default()
        };
        let report = estimation::train(&ref_arg(grammar, "grammar")?.inner, &ref_arg(corpus, "corpus")?.inner, &config)
            .map_err(|e| (PcfgStatus::EstimationError, e.to_string()))?;
        if let Some(summary) = out_summary.as_mut() {
            *summary = PcfgTrainSummary {
                iterations: report.records.len(),
                initial_log_likelihood: report.initial_log_likelihood,
                final_log_likelihood: report.records.last().map_or(report.initial_log_likelihood, |r| r.log_likelihood),
                converged: report.stop_reason == StopReason::Converged,
                zero_rules: report.zero_rules.len(),
            };
        }
        *out_grammar = boxed(PcfgGrammar { inner: report.final_grammar });
        Ok(())
    })
}

/// Runs the chart-versus-enumeration comparison; `*out_mismatches` is the
/// number of quantities that differ by more than `tolerance` (relative).
///
/// # Safety
/// Handles must be live; `out_mismatches` writable.
#[no_mangle]
pub unsafe extern "C" fn pcfg_check(
    grammar: *const PcfgGrammar,
    corpus: *const PcfgCorpus,
    cap: usize,
    tolerance: f64,
    out_mismatches: *mut usize,
) -> PcfgStatus {
    guard(|| {
        let out = out_arg(out_mismatches, "out_mismatches")?;
        let options = CheckOptions { cap, tolerance, ..CheckOptions::default() };
        let report =
            differential_check(&ref_arg(grammar, "grammar")?.inner, &ref_arg(corpus, "corpus")?.inner, &options)
                .map_err(|e| (PcfgStatus::OracleError, e.to_string()))?;
        *out = report.mismatches.len();
        Ok(())
    })
}
