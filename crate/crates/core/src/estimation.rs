//! Inside-outside re-estimation and the iterative training loop.
//!
//! One step replaces every rule probability by
//! `sum_y f(y) C_y(A -> alpha) / sum_y f(y) C_y(A)`. Sentence types with
//! probability 0 contribute nothing (or abort the step in strict mode). A
//! nonterminal whose aggregated category count is 0 keeps its previous
//! distribution.
//!
//! The E-step may run on several threads; per-type results are collected
//! in corpus order and reduced sequentially, so output does not depend on
//! the number of workers.

use rayon::prelude::*;
use thiserror::Error;

use crate::chart::{analyze, inside};
use crate::corpus::{Corpus, Sentence};
use crate::counts::{sentence_counts, CountTable};
use crate::grammar::{Grammar, GrammarError, RuleId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("no sentence in the corpus has a parse")]
    NoParseableSentences,
    #[error("sentence {sentence:?} has probability 0 (strict mode)")]
    Unparseable { sentence: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("thread pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Fail on sentence types with probability 0 instead of skipping them.
    pub strict: bool,
    /// Worker threads for the E-step; 0 and 1 both mean sequential.
    pub jobs: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { strict: false, jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Stop once `|L_new - L_old| < epsilon` (natural log).
    pub epsilon: f64,
    pub strict: bool,
    pub renormalize_tol: f64,
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_iters: 100, epsilon: 1e-6, strict: false, renormalize_tol: 1e-9, jobs: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.max_iters == 0 {
            return Err(EstimationError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(EstimationError::InvalidConfig("epsilon must be nonnegative".into()));
        }
        Ok(())
    }

    fn step_options(&self) -> StepOptions {
        StepOptions { strict: self.strict, jobs: self.jobs }
    }
}

/// Corpus log-likelihood `sum_y p~(y) ln P(y)`.
///
/// In lenient mode sentence types with `P = 0` are excluded and `p~` is
/// renormalized over the remaining types; `skipped` counts the excluded
/// types. In strict mode any such type makes the value `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub log_likelihood: f64,
    pub delta: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// Iteration at which some previously parseable sentence types lost all
/// their parses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseLoss {
    pub iteration: usize,
    pub lost: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Log-likelihood of the input grammar.
    pub initial_log_likelihood: f64,
    pub records: Vec<IterationRecord>,
    pub final_grammar: Grammar,
    pub stop_reason: StopReason,
    /// Rules whose probability is exactly 0 in the final grammar.
    pub zero_rules: Vec<RuleId>,
    pub parse_losses: Vec<ParseLoss>,
}

/// Result of one re-estimation step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub grammar: Grammar,
    /// Log-likelihood of the grammar the step started from.
    pub log_likelihood: LogLikelihood,
}

/// Per-type E-step output plus the frequency-weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusCounts {
    pub probs: Vec<f64>,
    pub per_type: Vec<Option<CountTable>>,
    pub total: CountTable,
}

impl CorpusCounts {
    pub fn skipped(&self) -> usize {
        self.per_type.iter().filter(|t| t.is_none()).count()
    }
}

/// Optional thread pool; maps over corpus types preserving order.
struct Workers(Option<rayon::ThreadPool>);

impl Workers {
    fn new(jobs: usize) -> Result<Self, EstimationError> {
        if jobs <= 1 {
            return Ok(Workers(None));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map(|pool| Workers(Some(pool)))
            .map_err(|e| EstimationError::Workers(e.to_string()))
    }

    fn map<T, F>(&self, sentences: &[Sentence], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Sentence) -> T + Sync + Send,
    {
        match &self.0 {
            None => sentences.iter().map(f).collect(),
            Some(pool) => pool.install(|| sentences.par_iter().map(f).collect()),
        }
    }
}

fn log_likelihood_from_probs(corpus: &Corpus, probs: &[f64], strict: bool) -> LogLikelihood {
    let mut weighted = 0.0;
    let mut mass = 0u64;
    let mut skipped = 0;
    for ((_, freq), &p) in corpus.iter().zip(probs) {
        if p > 0.0 {
            weighted += freq as f64 * p.ln();
            mass += freq;
        } else {
            skipped += 1;
        }
    }
    let value = if mass == 0 || (strict && skipped > 0) { f64::NEG_INFINITY } else { weighted / mass as f64 };
    LogLikelihood { value, skipped }
}

pub fn log_likelihood(grammar: &Grammar, corpus: &Corpus, strict: bool) -> LogLikelihood {
    let probs: Vec<f64> = corpus.types().iter().map(|y| inside(grammar, y).get(1, y.len(), grammar.start())).collect();
    log_likelihood_from_probs(corpus, &probs, strict)
}

/// `exp(-L)` over the parseable sentence types.
pub fn perplexity(grammar: &Grammar, corpus: &Corpus) -> f64 {
    (-log_likelihood(grammar, corpus, false).value).exp()
}

fn e_step(
    grammar: &Grammar,
    corpus: &Corpus,
    strict: bool,
    workers: &Workers,
) -> Result<CorpusCounts, EstimationError> {
    let results = workers.map(corpus.types(), |y| {
        let analysis = analyze(grammar, y);
        let table = sentence_counts(&analysis, grammar).ok();
        (analysis.prob, table)
    });
    let (probs, per_type): (Vec<f64>, Vec<Option<CountTable>>) = results.into_iter().unzip();

    if strict {
        if let Some(i) = per_type.iter().position(Option::is_none) {
            return Err(EstimationError::Unparseable { sentence: corpus.types()[i].to_string() });
        }
    }
    if per_type.iter().all(Option::is_none) {
        return Err(EstimationError::NoParseableSentences);
    }

    let mut total = CountTable::zeros(grammar);
    for (table, freq) in per_type.iter().zip(corpus.freqs()) {
        if let Some(table) = table {
            total.add_weighted(table, *freq as f64);
        }
    }
    Ok(CorpusCounts { probs, per_type, total })
}

/// Per-type and aggregated expected counts under `grammar`.
pub fn expected_counts(
    grammar: &Grammar,
    corpus: &Corpus,
    options: &StepOptions,
) -> Result<CorpusCounts, EstimationError> {
    e_step(grammar, corpus, options.strict, &Workers::new(options.jobs)?)
}

/// Ratio of aggregated rule count to aggregated category count for every
/// rule; nonterminals with zero category count are left unchanged.
pub fn maximize(grammar: &Grammar, counts: &CountTable) -> Result<Grammar, EstimationError> {
    let mut probs = grammar.probs().to_vec();
    for a in grammar.nonterminal_ids() {
        let denominator = counts.category(a);
        if denominator <= 0.0 {
            continue;
        }
        for &id in grammar.rules_for(a) {
            // rounding can push a lone rule's ratio a hair above 1
            probs[id.0] = (counts.rule(id) / denominator).min(1.0);
        }
    }
    Ok(grammar.with_probs(probs)?)
}

pub fn reestimate(grammar: &Grammar, corpus: &Corpus) -> Result<Grammar, EstimationError> {
    reestimate_with(grammar, corpus, &StepOptions::default()).map(|step| step.grammar)
}

pub fn reestimate_with(grammar: &Grammar, corpus: &Corpus, options: &StepOptions) -> Result<Step, EstimationError> {
    let counts = expected_counts(grammar, corpus, options)?;
    let log_likelihood = log_likelihood_from_probs(corpus, &counts.probs, options.strict);
    Ok(Step { grammar: maximize(grammar, &counts.total)?, log_likelihood })
}

/// Re-estimates until the log-likelihood changes by less than `epsilon` or
/// `max_iters` steps have run. Record `i` holds the log-likelihood of the
/// grammar produced by step `i`.
pub fn train(grammar: &Grammar, corpus: &Corpus, config: &TrainConfig) -> Result<TrainReport, EstimationError> {
    config.validate()?;
    let options = config.step_options();
    let workers = Workers::new(options.jobs)?;

    let mut current = grammar.clone();
    let mut counts = e_step(&current, corpus, options.strict, &workers)?;
    let initial = log_likelihood_from_probs(corpus, &counts.probs, options.strict);
    let mut previous_ll = initial.value;
    let mut parseable = counts.per_type.len() - initial.skipped;

    let mut records = Vec::new();
    let mut parse_losses = Vec::new();
    let stop_reason = loop {
        let index = records.len() + 1;
        let next = maximize(&current, &counts.total)?;
        let next_counts = e_step(&next, corpus, options.strict, &workers)?;
        let ll = log_likelihood_from_probs(corpus, &next_counts.probs, options.strict);
        let delta = ll.value - previous_ll;
        records.push(IterationRecord { index, log_likelihood: ll.value, delta, skipped: ll.skipped });

        let now_parseable = next_counts.per_type.len() - ll.skipped;
        if now_parseable < parseable {
            parse_losses.push(ParseLoss { iteration: index, lost: parseable - now_parseable });
        }
        parseable = now_parseable;
        previous_ll = ll.value;
        current = next;
        counts = next_counts;

        if delta.abs() < config.epsilon {
            break StopReason::Converged;
        }
        if index >= config.max_iters {
            break StopReason::MaxIters;
        }
    };

    let zero_rules = current.rule_ids().filter(|&id| current.prob(id) == 0.0).collect();
    Ok(TrainReport {
        initial_log_likelihood: initial.value,
        records,
        final_grammar: current,
        stop_reason,
        zero_rules,
        parse_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_corpus;
    use crate::grammar::{parse_grammar, validate_cnf};

    const G0: &str = "S -> S S 0.5\nS -> \"a\" 0.5\n";
    const G1: &str = "S -> A B 1.0\nA -> \"a\" 1.0\nB -> \"b\" 1.0\n";

    fn setup(grammar: &str, corpus: &str) -> (Grammar, Corpus) {
        (parse_grammar(grammar).unwrap(), load_corpus(corpus).unwrap())
    }

    #[test]
    fn log_likelihood_examples() {
        let (g0, c) = setup(G0, "a a\n");
        let ll = log_likelihood(&g0, &c, false);
        assert!((ll.value - 0.125f64.ln()).abs() < 1e-12);
        assert_eq!(ll.skipped, 0);
        let (g1, c1) = setup(G1, "a b\n");
        assert_eq!(log_likelihood(&g1, &c1, false).value, 0.0);
        assert_eq!(perplexity(&g1, &c1), 1.0);
        assert!((perplexity(&g0, &c) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_on_g0() {
        let (g0, c) = setup(G0, "a a\n");
        let next = reestimate(&g0, &c).unwrap();
        assert!((next.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((next.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
        let ll = log_likelihood(&next, &c, false).value;
        assert!((ll - (4.0f64 / 27.0).ln()).abs() < 1e-12);
        assert!((perplexity(&next, &c) - 6.75).abs() < 1e-12);
    }

    #[test]
    fn unused_binary_rule_goes_to_zero() {
        let (g0, c) = setup(G0, "a\n");
        let next = reestimate(&g0, &c).unwrap();
        assert_eq!(next.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn deterministic_grammar_is_fixed_point() {
        let (g1, c) = setup(G1, "a b\n");
        assert_eq!(reestimate(&g1, &c).unwrap(), g1);
        let report = train(&g1, &c, &TrainConfig::default()).unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].delta, 0.0);
        assert_eq!(report.stop_reason, StopReason::Converged);
    }

    #[test]
    fn lenient_mode_skips_unparseable_types() {
        let (g0, c) = setup(G0, "a a\nb\na a\n");
        let ll = log_likelihood(&g0, &c, false);
        assert_eq!(ll.skipped, 1);
        assert!((ll.value - 0.125f64.ln()).abs() < 1e-12);
        assert_eq!(log_likelihood(&g0, &c, true).value, f64::NEG_INFINITY);

        let step = reestimate_with(&g0, &c, &StepOptions::default()).unwrap();
        assert!((step.grammar.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(step.log_likelihood.skipped, 1);

        let strict = StepOptions { strict: true, jobs: 1 };
        assert_eq!(
            reestimate_with(&g0, &c, &strict).unwrap_err(),
            EstimationError::Unparseable { sentence: "b".into() }
        );
    }

    #[test]
    fn all_unparseable_is_an_error() {
        let (g0, c) = setup(G0, "b\nb b\n");
        assert_eq!(reestimate(&g0, &c).unwrap_err(), EstimationError::NoParseableSentences);
        assert_eq!(train(&g0, &c, &TrainConfig::default()).unwrap_err(), EstimationError::NoParseableSentences);
    }

    #[test]
    fn unused_nonterminal_keeps_its_distribution() {
        let (g, c) = setup("S -> \"a\" 1\nX -> \"a\" 0.25\nX -> \"b\" 0.75\n", "a\n");
        let next = reestimate(&g, &c).unwrap();
        assert_eq!(next.probs(), g.probs());
    }

    #[test]
    fn training_g0_is_monotone_and_reports_zero_rules() {
        let (g0, c) = setup(G0, "a a\n");
        let config = TrainConfig { max_iters: 50, epsilon: 0.0, ..TrainConfig::default() };
        let report = train(&g0, &c, &config).unwrap();
        assert_eq!(report.records.len(), 50);
        assert_eq!(report.stop_reason, StopReason::MaxIters);
        for record in &report.records {
            assert!(record.delta >= -1e-9, "{record:?}");
        }
        assert!(validate_cnf(&report.final_grammar).is_valid());
        // the optimum for a single "a a" is p(S -> S S) = 1/3 already
        assert!((report.final_grammar.probs()[0] - 1.0 / 3.0).abs() < 1e-9);

        let (g0, c) = setup(G0, "a\n");
        let report = train(&g0, &c, &TrainConfig::default()).unwrap();
        assert_eq!(report.zero_rules, vec![RuleId(0)]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (g0, c) = setup(G0, "a\n");
        let bad = TrainConfig { max_iters: 0, ..TrainConfig::default() };
        assert!(matches!(train(&g0, &c, &bad), Err(EstimationError::InvalidConfig(_))));
        let bad = TrainConfig { epsilon: f64::NAN, ..TrainConfig::default() };
        assert!(matches!(train(&g0, &c, &bad), Err(EstimationError::InvalidConfig(_))));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (g, c) = setup(
            "S -> S A 0.3\nS -> A S 0.2\nS -> \"a\" 0.5\nA -> S S 0.4\nA -> \"a\" 0.3\nA -> \"b\" 0.3\n",
            "a b a\nb a\na a b a\na\nb b a\na b\n",
        );
        let one = train(&g, &c, &TrainConfig { max_iters: 10, jobs: 1, ..TrainConfig::default() }).unwrap();
        let four = train(&g, &c, &TrainConfig { max_iters: 10, jobs: 4, ..TrainConfig::default() }).unwrap();
        assert_eq!(one, four);
    }
}
