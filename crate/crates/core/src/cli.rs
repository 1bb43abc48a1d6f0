//! The `pcfg-em` command line.
//!
//! [`run`] takes the argument vector and two writers so the whole tool can
//! be driven in-process by tests. Exit codes: 0 success, 1 usage or input
//! error, 2 differential-check mismatch.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::chart::analyze;
use crate::corpus::{load_corpus, Corpus, Sentence};
use crate::counts::{sentence_counts, CountTable};
use crate::estimation::{self, expected_counts, maximize, StepOptions, StopReason, TrainConfig};
use crate::format_number;
use crate::grammar::{parse_grammar_with, validate_cnf, Grammar, Normalization, ParseOptions, Rule, RuleId};
use crate::oracle::{self, DEFAULT_TREE_CAP};

const FORMATS: &str = "\
FILE FORMATS

Grammar file (UTF-8 text, one rule per line):
  LHS -> RHS1 RHS2 <prob>     binary rule, two nonterminals
  LHS -> \"terminal\" <prob>    lexical rule, one quoted terminal
  <prob> is a decimal literal in [0, 1]. Lines beginning with # are
  comments; blank lines are ignored. The first non-comment line may be
  `start: <NT>`; the default start symbol is the LHS of the first rule.
  The probabilities of all rules sharing a LHS must sum to 1 (within 1e-9)
  unless --renormalize is given.

Corpus file (UTF-8 text):
  One sentence per line, tokens separated by whitespace. Blank lines are
  skipped. Repeated lines count as repeated observations.";

#[derive(Debug, Parser)]
#[command(
    name = "pcfg-em",
    version,
    about = "Inside-outside training and EM verification for CNF probabilistic grammars",
    after_help = FORMATS,
    after_long_help = FORMATS
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GrammarArgs {
    /// Grammar file
    #[arg(long, value_name = "FILE")]
    grammar: PathBuf,
    /// Renormalize rule distributions instead of rejecting unnormalized grammars
    #[arg(long)]
    renormalize: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a grammar is a normalized CNF grammar
    Validate {
        #[command(flatten)]
        grammar: GrammarArgs,
    },
    /// Print the sentence probability and optionally the inside/outside tables
    Inside {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[arg(long)]
        sentence: String,
        /// Also print every nonzero chart entry as `e s t A value` / `f s t A value`
        #[arg(long)]
        tables: bool,
    },
    /// Print expected rule and category counts
    Counts {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
        sentence: Option<String>,
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
        /// With --corpus, print one table per sentence type instead of the total
        #[arg(long, requires = "corpus")]
        per_sentence: bool,
        #[arg(long)]
        strict: bool,
        /// Worker threads for the E-step; output does not depend on it
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Enumerate every parse tree of a sentence with its probability
    Parse {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[arg(long)]
        sentence: String,
        /// Maximum number of trees to enumerate per sentence
        #[arg(long, default_value_t = DEFAULT_TREE_CAP)]
        cap: usize,
    },
    /// Train with inside-outside re-estimation
    Train {
        #[command(flatten)]
        grammar: GrammarArgs,
        /// Training corpus
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Maximum number of re-estimation steps
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        /// Stop once the log-likelihood changes by less than this
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Fail on sentences with probability 0 instead of skipping them
        #[arg(long)]
        strict: bool,
        /// Where to write the trained grammar
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Worker threads for the E-step; output does not depend on it
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare inside-outside counts and re-estimates with tree-enumeration EM
    Check {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Maximum number of trees to enumerate per sentence
        #[arg(long, default_value_t = DEFAULT_TREE_CAP)]
        cap: usize,
        /// Relative tolerance
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Worker threads for the E-step; output does not depend on it
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Scale the inside-outside count of this rule (`A -> B C` or `A -> "a"`) by 1 + 1e-6
        #[arg(long, hide = true, value_name = "RULE")]
        perturb_rule: Option<String>,
    },
    /// Print log-likelihood and perplexity of a corpus
    Perplexity {
        #[command(flatten)]
        grammar: GrammarArgs,
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Report -inf instead of skipping sentences with probability 0
        #[arg(long)]
        strict: bool,
    },
}

/// Failure of a subcommand; rendered as one `error:` line.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            let _ = writeln!(err, "error: {first}");
            return 1;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(Failure(message)) => {
            let _ = writeln!(err, "error: {}", message.replace('\n', " "));
            1
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))
}

fn load_grammar(args: &GrammarArgs, normalization: Normalization) -> Result<Grammar, Failure> {
    let normalization = if args.renormalize { Normalization::Renormalize } else { normalization };
    let text = read(&args.grammar)?;
    parse_grammar_with(&text, ParseOptions { normalization })
        .map_err(|e| Failure(format!("{}: {e}", args.grammar.display())))
}

fn load_corpus_file(path: &Path) -> Result<Corpus, Failure> {
    load_corpus(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn parse_sentence(text: &str) -> Result<Sentence, Failure> {
    Sentence::parse(text).map_err(|e| Failure(format!("--sentence: {e}")))
}

/// `S S S` for binary rules, `S "a"` for lexical ones.
fn rule_fields(grammar: &Grammar, id: RuleId) -> String {
    let symbols = grammar.symbols();
    match grammar.rule(id) {
        Rule::Binary { lhs, left, right } => format!(
            "{} {} {}",
            symbols.nonterminal_name(lhs),
            symbols.nonterminal_name(left),
            symbols.nonterminal_name(right)
        ),
        Rule::Lexical { lhs, terminal } => {
            format!("{} \"{}\"", symbols.nonterminal_name(lhs), symbols.terminal_name(terminal))
        }
    }
}

fn write_counts(out: &mut dyn Write, grammar: &Grammar, table: &CountTable) -> std::io::Result<()> {
    for id in grammar.rule_ids() {
        writeln!(out, "rule {} {}", rule_fields(grammar, id), format_number(table.rule(id)))?;
    }
    for a in grammar.nonterminal_ids() {
        writeln!(out, "cat {} {}", grammar.symbols().nonterminal_name(a), format_number(table.category(a)))?;
    }
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match command {
        Command::Validate { grammar } => cmd_validate(&grammar, out, err),
        Command::Inside { grammar, sentence, tables } => cmd_inside(&grammar, &sentence, tables, out),
        Command::Counts { grammar, sentence, corpus, per_sentence, strict, jobs } => {
            cmd_counts(&grammar, sentence.as_deref(), corpus.as_deref(), per_sentence, strict, jobs, out, err)
        }
        Command::Parse { grammar, sentence, cap } => cmd_parse(&grammar, &sentence, cap, out, err),
        Command::Train { grammar, corpus, max_iters, epsilon, strict, out: path, jobs } => {
            let config = TrainConfig { max_iters, epsilon, strict, jobs, ..TrainConfig::default() };
            cmd_train(&grammar, &corpus, &config, &path, out, err)
        }
        Command::Check { grammar, corpus, cap, tolerance, jobs, perturb_rule } => {
            let g = load_grammar(&grammar, Normalization::Require)?;
            let c = load_corpus_file(&corpus)?;
            let perturb = match perturb_rule {
                Some(text) => Some(
                    g.rule_ids()
                        .find(|&id| g.display_rule(id) == text.split_whitespace().collect::<Vec<_>>().join(" "))
                        .ok_or_else(|| Failure(format!("--perturb-rule: no rule {text}")))?,
                ),
                None => None,
            };
            let options = CheckOptions { cap, tolerance, jobs, perturb };
            cmd_check(&g, &c, &options, out)
        }
        Command::Perplexity { grammar, corpus, strict } => cmd_perplexity(&grammar, &corpus, strict, out, err),
    }
}

fn cmd_validate(args: &GrammarArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let grammar = load_grammar(args, Normalization::Unchecked)?;
    let report = validate_cnf(&grammar);
    if report.is_valid() {
        writeln!(out, "OK")?;
        return Ok(0);
    }
    for issue in &report.issues {
        writeln!(out, "{issue}")?;
    }
    writeln!(err, "error: {}: {} violated invariant(s)", args.grammar.display(), report.issues.len())?;
    Ok(1)
}

fn cmd_inside(args: &GrammarArgs, sentence: &str, tables: bool, out: &mut dyn Write) -> CmdResult {
    let grammar = load_grammar(args, Normalization::Require)?;
    let sentence = parse_sentence(sentence)?;
    let analysis = analyze(&grammar, &sentence);
    writeln!(out, "P {}", format_number(analysis.prob))?;
    if tables {
        let names = grammar.symbols();
        for (s, t, a, v) in analysis.inside.entries().filter(|e| e.3 != 0.0) {
            writeln!(out, "e {s} {t} {} {}", names.nonterminal_name(a), format_number(v))?;
        }
        for (s, t, a, v) in analysis.outside.entries().filter(|e| e.3 != 0.0) {
            writeln!(out, "f {s} {t} {} {}", names.nonterminal_name(a), format_number(v))?;
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_counts(
    args: &GrammarArgs,
    sentence: Option<&str>,
    corpus: Option<&Path>,
    per_sentence: bool,
    strict: bool,
    jobs: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let grammar = load_grammar(args, Normalization::Require)?;
    if let Some(text) = sentence {
        let sentence = parse_sentence(text)?;
        let table = sentence_counts(&analyze(&grammar, &sentence), &grammar)
            .map_err(|e| Failure(format!("{sentence:?}: {e}")))?;
        write_counts(out, &grammar, &table)?;
        return Ok(0);
    }
    let path = corpus.expect("clap enforces --sentence or --corpus");
    let corpus = load_corpus_file(path)?;
    let counts = expected_counts(&grammar, &corpus, &StepOptions { strict, jobs })?;
    if per_sentence {
        for ((sentence, freq), table) in corpus.iter().zip(&counts.per_type) {
            writeln!(out, "sentence {freq} {sentence}")?;
            match table {
                Some(table) => write_counts(out, &grammar, table)?,
                None => writeln!(out, "unparseable")?,
            }
        }
    } else {
        write_counts(out, &grammar, &counts.total)?;
    }
    if counts.skipped() > 0 {
        writeln!(err, "warning: skipped {} sentence type(s) with probability 0", counts.skipped())?;
    }
    Ok(0)
}

fn cmd_parse(args: &GrammarArgs, sentence: &str, cap: usize, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let grammar = load_grammar(args, Normalization::Require)?;
    let sentence = parse_sentence(sentence)?;
    let trees = oracle::enumerate_trees(&grammar, &sentence, cap)?;
    if trees.is_empty() {
        writeln!(err, "warning: no parse")?;
    }
    for tree in &trees {
        let stats = oracle::tree_stats(&grammar, tree)?;
        writeln!(out, "{} {}", tree.bracketed(grammar.symbols()), format_number(stats.prob))?;
    }
    Ok(0)
}

fn cmd_train(
    args: &GrammarArgs,
    corpus: &Path,
    config: &TrainConfig,
    path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let grammar = load_grammar(args, Normalization::Require)?;
    let corpus = load_corpus_file(corpus)?;
    let report = estimation::train(&grammar, &corpus, config)?;
    for r in &report.records {
        writeln!(
            out,
            "iter {} loglik {} delta {} skipped {}",
            r.index,
            format_number(r.log_likelihood),
            format_number(r.delta),
            r.skipped
        )?;
    }
    fs::write(path, report.final_grammar.to_text())
        .map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?;

    let iterations = report.records.len();
    match report.stop_reason {
        StopReason::Converged => writeln!(err, "converged after {iterations} iteration(s)")?,
        StopReason::MaxIters => writeln!(err, "stopped after {iterations} iteration(s) without converging")?,
    }
    for loss in &report.parse_losses {
        writeln!(err, "warning: iteration {}: {} sentence type(s) lost all parses", loss.iteration, loss.lost)?;
    }
    for &id in &report.zero_rules {
        writeln!(err, "warning: rule {} has probability 0", report.final_grammar.display_rule(id))?;
    }
    Ok(0)
}

fn cmd_perplexity(
    args: &GrammarArgs,
    corpus: &Path,
    strict: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let grammar = load_grammar(args, Normalization::Require)?;
    let corpus = load_corpus_file(corpus)?;
    let ll = estimation::log_likelihood(&grammar, &corpus, strict);
    writeln!(out, "loglik {}", format_number(ll.value))?;
    writeln!(out, "perplexity {}", format_number((-ll.value).exp()))?;
    writeln!(out, "skipped {}", ll.skipped)?;
    if ll.skipped > 0 && !strict {
        writeln!(err, "warning: {} sentence type(s) with probability 0 excluded", ll.skipped)?;
    }
    Ok(0)
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub cap: usize,
    pub tolerance: f64,
    pub jobs: usize,
    /// Fault injection: inflate this rule's chart-based count before comparing.
    pub perturb: Option<RuleId>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { cap: DEFAULT_TREE_CAP, tolerance: 1e-9, jobs: 1, perturb: None }
    }
}

/// One disagreement between the chart route and the enumeration route.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub what: String,
    pub chart: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub sentences: usize,
    pub skipped: usize,
    pub comparisons: usize,
    pub mismatches: Vec<Mismatch>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Estimation(#[from] estimation::EstimationError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

/// `a` and `b` agree to relative tolerance `tol`.
pub fn relatively_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Compares, for every sentence type, the sentence probability, every rule
/// count and every category count against tree enumeration, then the
/// re-estimated grammar against the enumeration EM step.
pub fn differential_check(
    grammar: &Grammar,
    corpus: &Corpus,
    options: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    let mut counts = expected_counts(grammar, corpus, &StepOptions { strict: false, jobs: options.jobs })?;
    if let Some(id) = options.perturb {
        for table in counts.per_type.iter_mut().flatten() {
            table.rule_counts[id.0] *= 1.0 + 1e-6;
        }
        counts.total.rule_counts[id.0] *= 1.0 + 1e-6;
    }

    let mut report = CheckReport::default();
    let mut compare = |what: String, chart: f64, oracle: f64| {
        report.comparisons += 1;
        if !relatively_close(chart, oracle, options.tolerance) {
            report.mismatches.push(Mismatch { what, chart, oracle });
        }
    };

    for ((sentence, _), (table, &prob)) in corpus.iter().zip(counts.per_type.iter().zip(&counts.probs)) {
        let oracle_prob = oracle::sentence_prob_oracle(grammar, sentence, options.cap)?;
        compare(format!("P [{sentence}]"), prob, oracle_prob);
        let Some(table) = table else { continue };
        let expected = oracle::expectations(grammar, sentence, options.cap)?;
        for id in grammar.rule_ids() {
            compare(format!("count {} [{sentence}]", grammar.display_rule(id)), table.rule(id), expected.rule[id.0]);
        }
        for a in grammar.nonterminal_ids() {
            compare(
                format!("count {} [{sentence}]", grammar.symbols().nonterminal_name(a)),
                table.category(a),
                expected.category[a.0],
            );
        }
    }

    let chart_step = maximize(grammar, &counts.total)?;
    let oracle_step = oracle::em_step(grammar, corpus, options.cap)?;
    for id in grammar.rule_ids() {
        compare(format!("p^ {}", grammar.display_rule(id)), chart_step.prob(id), oracle_step.prob(id));
    }

    report.skipped = counts.skipped();
    report.sentences = corpus.types().len() - report.skipped;
    Ok(report)
}

fn cmd_check(grammar: &Grammar, corpus: &Corpus, options: &CheckOptions, out: &mut dyn Write) -> CmdResult {
    let report = differential_check(grammar, corpus, options)?;
    for m in &report.mismatches {
        writeln!(
            out,
            "mismatch {}: inside-outside {} enumeration {}",
            m.what,
            format_number(m.chart),
            format_number(m.oracle)
        )?;
    }
    if report.mismatches.is_empty() {
        writeln!(
            out,
            "OK {} comparisons over {} sentence type(s), {} skipped",
            report.comparisons, report.sentences, report.skipped
        )?;
        Ok(0)
    } else {
        writeln!(out, "FAILED {} of {} comparisons", report.mismatches.len(), report.comparisons)?;
        Ok(2)
    }
}
