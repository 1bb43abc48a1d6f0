//! Inside-outside training for probabilistic context-free grammars in
//! Chomsky normal form.
//!
//! The crate has two independent routes to the same quantities:
//!
//! * [`chart`], [`counts`] and [`estimation`] compute inside/outside
//!   charts, expected rule counts and re-estimated grammars by dynamic
//!   programming;
//! * [`oracle`] enumerates every parse tree of a sentence explicitly and
//!   computes tree probabilities, conditional expected rule frequencies and
//!   a textbook EM step from them.
//!
//! The two routes agree to rounding error, which is what the differential
//! tests and the `check` subcommand verify.

pub mod chart;
pub mod cli;
pub mod corpus;
pub mod counts;
pub mod estimation;
pub mod grammar;
pub mod oracle;

pub use chart::{analyze, inside, outside, InsideChart, OutsideChart, SentenceAnalysis};
pub use corpus::{load_corpus, Corpus, CorpusError, Sentence};
pub use counts::{aggregate, sentence_counts, CountError, CountTable};
pub use estimation::{
    log_likelihood, perplexity, reestimate, train, EstimationError, IterationRecord, LogLikelihood, StepOptions,
    StopReason, TrainConfig, TrainReport,
};
pub use grammar::{
    parse_grammar, parse_grammar_with, validate_cnf, Grammar, GrammarError, NonterminalId, Normalization, ParseOptions,
    Rule, RuleId, SymbolTable, TerminalId, ValidationReport,
};
pub use oracle::{em_step, enumerate_trees, sentence_prob_oracle, tree_stats, OracleError, ParseTree};

/// Formats a float so that parsing the text yields the same bits.
///
/// Uses the shortest round-trip representation, switching to exponent
/// notation outside `[1e-5, 1e16)` to keep tiny probabilities readable.
pub fn format_number(x: f64) -> String {
    let magnitude = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&magnitude) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
