//! CNF probabilistic grammars: symbols, rules, rule probabilities and the
//! line-oriented grammar file format.
//!
//! ```text
//! # comment
//! start: S
//! S -> S S 0.5
//! S -> "a" 0.5
//! ```
//!
//! Binary rules name two nonterminals, lexical rules name one quoted
//! terminal. Rule order in the file is the canonical rule order used by
//! every summation in the crate.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::format_number;

/// Maximum deviation of an LHS distribution from 1 accepted on load.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Distributions closer to 1 than this are left untouched by
/// [`Grammar::renormalize`], which makes it exactly idempotent.
const RENORMALIZE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NonterminalId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TerminalId(pub usize);

/// Position of a rule in the grammar's canonical rule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate rule {rule}")]
    DuplicateRule { line: usize, rule: String },
    #[error("line {line}: {message}")]
    InvalidSymbol { line: usize, message: String },
    #[error("line {line}: probability {value} is outside [0, 1]")]
    ProbabilityOutOfRange { line: usize, value: f64 },
    #[error("line {line}: symbol {name:?} is used both as a nonterminal and as a terminal")]
    SymbolClash { line: usize, name: String },
    #[error("distribution of {lhs} sums to {sum}, expected 1")]
    Unnormalized { lhs: String, sum: f64 },
    #[error("rules of {lhs} have total probability 0 and cannot be renormalized")]
    ZeroMass { lhs: String },
    #[error("grammar has no rules")]
    Empty,
    #[error("invalid symbol table: {0}")]
    Symbols(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("rule {rule} has invalid probability {value}")]
    InvalidProbability { rule: String, value: f64 },
}

/// Nonterminal and terminal names plus the start symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    start: NonterminalId,
    nt_index: HashMap<String, NonterminalId>,
    t_index: HashMap<String, TerminalId>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(|c| c.is_whitespace() || c == '"')
}

impl SymbolTable {
    pub fn new(nonterminals: Vec<String>, terminals: Vec<String>, start: &str) -> Result<Self, GrammarError> {
        let mut nt_index = HashMap::with_capacity(nonterminals.len());
        for (i, name) in nonterminals.iter().enumerate() {
            if !valid_name(name) {
                return Err(GrammarError::Symbols(format!("bad nonterminal name {name:?}")));
            }
            if nt_index.insert(name.clone(), NonterminalId(i)).is_some() {
                return Err(GrammarError::Symbols(format!("nonterminal {name} listed twice")));
            }
        }
        let mut t_index = HashMap::with_capacity(terminals.len());
        for (i, name) in terminals.iter().enumerate() {
            if !valid_name(name) {
                return Err(GrammarError::Symbols(format!("bad terminal name {name:?}")));
            }
            if nt_index.contains_key(name) {
                return Err(GrammarError::Symbols(format!("{name} is both a nonterminal and a terminal")));
            }
            if t_index.insert(name.clone(), TerminalId(i)).is_some() {
                return Err(GrammarError::Symbols(format!("terminal {name} listed twice")));
            }
        }
        let start = *nt_index
            .get(start)
            .ok_or_else(|| GrammarError::Symbols(format!("start symbol {start} is not a nonterminal")))?;
        Ok(SymbolTable { nonterminals, terminals, start, nt_index, t_index })
    }

    pub fn start(&self) -> NonterminalId {
        self.start
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn nonterminal_count(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn nonterminal(&self, name: &str) -> Option<NonterminalId> {
        self.nt_index.get(name).copied()
    }

    pub fn terminal(&self, name: &str) -> Option<TerminalId> {
        self.t_index.get(name).copied()
    }

    pub fn nonterminal_name(&self, id: NonterminalId) -> &str {
        &self.nonterminals[id.0]
    }

    pub fn terminal_name(&self, id: TerminalId) -> &str {
        &self.terminals[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Binary { lhs: NonterminalId, left: NonterminalId, right: NonterminalId },
    Lexical { lhs: NonterminalId, terminal: TerminalId },
}

impl Rule {
    pub fn lhs(&self) -> NonterminalId {
        match *self {
            Rule::Binary { lhs, .. } | Rule::Lexical { lhs, .. } => lhs,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Rule::Binary { .. })
    }

    /// Renders the rule as it appears in a grammar file, without probability.
    pub fn display<'a>(&'a self, symbols: &'a SymbolTable) -> RuleDisplay<'a> {
        RuleDisplay { rule: self, symbols }
    }

    fn check_symbols(&self, symbols: &SymbolTable) -> bool {
        let nts = symbols.nonterminal_count();
        match *self {
            Rule::Binary { lhs, left, right } => lhs.0 < nts && left.0 < nts && right.0 < nts,
            Rule::Lexical { lhs, terminal } => lhs.0 < nts && terminal.0 < symbols.terminal_count(),
        }
    }
}

pub struct RuleDisplay<'a> {
    rule: &'a Rule,
    symbols: &'a SymbolTable,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.symbols;
        match *self.rule {
            Rule::Binary { lhs, left, right } => {
                write!(f, "{} -> {} {}", s.nonterminal_name(lhs), s.nonterminal_name(left), s.nonterminal_name(right))
            }
            Rule::Lexical { lhs, terminal } => {
                write!(f, "{} -> \"{}\"", s.nonterminal_name(lhs), s.terminal_name(terminal))
            }
        }
    }
}

/// A CNF grammar with one probability per rule.
///
/// Structural invariants (known symbols, no duplicates, probabilities in
/// [0, 1]) hold for every value of this type. Normalization of the LHS
/// distributions is checked by [`validate_cnf`] and enforced by
/// [`parse_grammar`].
#[derive(Debug, Clone)]
pub struct Grammar {
    symbols: SymbolTable,
    rules: Vec<Rule>,
    probs: Vec<f64>,
    index: HashMap<Rule, RuleId>,
    by_lhs: Vec<Vec<RuleId>>,
    binary_by_left: Vec<Vec<RuleId>>,
    binary_by_right: Vec<Vec<RuleId>>,
    lexical_by_terminal: Vec<Vec<RuleId>>,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols && self.rules == other.rules && self.probs == other.probs
    }
}

impl Grammar {
    pub fn new(symbols: SymbolTable, rules: Vec<(Rule, f64)>) -> Result<Self, GrammarError> {
        let (rules, probs): (Vec<Rule>, Vec<f64>) = rules.into_iter().unzip();
        let mut index = HashMap::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            if !rule.check_symbols(&symbols) {
                return Err(GrammarError::InvalidRule(format!("{rule:?} references unknown symbols")));
            }
            if index.insert(*rule, RuleId(i)).is_some() {
                return Err(GrammarError::InvalidRule(format!("duplicate rule {}", rule.display(&symbols))));
            }
        }
        let nts = symbols.nonterminal_count();
        let mut by_lhs = vec![Vec::new(); nts];
        let mut binary_by_left = vec![Vec::new(); nts];
        let mut binary_by_right = vec![Vec::new(); nts];
        let mut lexical_by_terminal = vec![Vec::new(); symbols.terminal_count()];
        for (i, rule) in rules.iter().enumerate() {
            let id = RuleId(i);
            by_lhs[rule.lhs().0].push(id);
            match *rule {
                Rule::Binary { left, right, .. } => {
                    binary_by_left[left.0].push(id);
                    binary_by_right[right.0].push(id);
                }
                Rule::Lexical { terminal, .. } => lexical_by_terminal[terminal.0].push(id),
            }
        }
        let grammar = Grammar {
            symbols,
            rules,
            probs: Vec::new(),
            index,
            by_lhs,
            binary_by_left,
            binary_by_right,
            lexical_by_terminal,
        };
        grammar.with_probs(probs)
    }

    /// Same rules, new probabilities (in rule order).
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self, GrammarError> {
        if probs.len() != self.rules.len() {
            return Err(GrammarError::InvalidRule(format!(
                "expected {} probabilities, got {}",
                self.rules.len(),
                probs.len()
            )));
        }
        for (rule, &p) in self.rules.iter().zip(&probs) {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(GrammarError::InvalidProbability {
                    rule: rule.display(&self.symbols).to_string(),
                    value: p,
                });
            }
        }
        Ok(Grammar { probs, ..self.clone_structure() })
    }

    fn clone_structure(&self) -> Self {
        Grammar {
            symbols: self.symbols.clone(),
            rules: self.rules.clone(),
            probs: Vec::new(),
            index: self.index.clone(),
            by_lhs: self.by_lhs.clone(),
            binary_by_left: self.binary_by_left.clone(),
            binary_by_right: self.binary_by_right.clone(),
            lexical_by_terminal: self.lexical_by_terminal.clone(),
        }
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn start(&self) -> NonterminalId {
        self.symbols.start
    }

    pub fn nonterminal_count(&self) -> usize {
        self.symbols.nonterminal_count()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rule(&self, id: RuleId) -> Rule {
        self.rules[id.0]
    }

    pub fn prob(&self, id: RuleId) -> f64 {
        self.probs[id.0]
    }

    pub fn rule_id(&self, rule: &Rule) -> Option<RuleId> {
        self.index.get(rule).copied()
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = RuleId> {
        (0..self.rules.len()).map(RuleId)
    }

    pub fn nonterminal_ids(&self) -> impl Iterator<Item = NonterminalId> {
        (0..self.nonterminal_count()).map(NonterminalId)
    }

    /// Rules with left-hand side `lhs`, in canonical order.
    pub fn rules_for(&self, lhs: NonterminalId) -> &[RuleId] {
        &self.by_lhs[lhs.0]
    }

    /// Binary rules whose left child is `nt`.
    pub fn binary_with_left(&self, nt: NonterminalId) -> &[RuleId] {
        &self.binary_by_left[nt.0]
    }

    /// Binary rules whose right child is `nt`.
    pub fn binary_with_right(&self, nt: NonterminalId) -> &[RuleId] {
        &self.binary_by_right[nt.0]
    }

    pub fn lexical_rules_for(&self, terminal: TerminalId) -> &[RuleId] {
        &self.lexical_by_terminal[terminal.0]
    }

    pub fn display_rule(&self, id: RuleId) -> String {
        self.rules[id.0].display(&self.symbols).to_string()
    }

    /// Sum of rule probabilities per nonterminal; `None` for nonterminals
    /// without rules.
    pub fn lhs_sums(&self) -> Vec<Option<f64>> {
        self.by_lhs
            .iter()
            .map(|ids| if ids.is_empty() { None } else { Some(ids.iter().map(|id| self.probs[id.0]).sum()) })
            .collect()
    }

    /// Divides every LHS distribution by its total mass.
    pub fn renormalize(&self) -> Result<Grammar, GrammarError> {
        let mut probs = self.probs.clone();
        for (lhs, sum) in self.lhs_sums().into_iter().enumerate() {
            let Some(sum) = sum else { continue };
            if sum <= 0.0 {
                return Err(GrammarError::ZeroMass { lhs: self.symbols.nonterminals[lhs].clone() });
            }
            if (sum - 1.0).abs() <= RENORMALIZE_SLACK {
                continue;
            }
            for id in &self.by_lhs[lhs] {
                probs[id.0] = (probs[id.0] / sum).min(1.0);
            }
        }
        self.with_probs(probs)
    }

    /// Grammar file text; parses back to an identical grammar.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "start: {}", self.symbols.nonterminal_name(self.start()))?;
        for (rule, &p) in self.rules.iter().zip(&self.probs) {
            writeln!(f, "{} {}", rule.display(&self.symbols), format_number(p))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    ProbabilityOutOfRange { rule: String, value: f64 },
    Unnormalized { lhs: String, sum: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::ProbabilityOutOfRange { rule, value } => {
                write!(f, "{rule} has probability {} outside [0, 1]", format_number(*value))
            }
            ValidationIssue::Unnormalized { lhs, sum } => {
                write!(f, "{lhs} distribution sums to {}", format_number(*sum))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Lists every violated stochastic invariant. Shape and symbol invariants
/// are guaranteed by construction and cannot appear here.
pub fn validate_cnf(grammar: &Grammar) -> ValidationReport {
    validate_with_tolerance(grammar, NORMALIZATION_TOLERANCE)
}

pub fn validate_with_tolerance(grammar: &Grammar, tolerance: f64) -> ValidationReport {
    let mut issues = Vec::new();
    for (rule, &p) in grammar.rules.iter().zip(&grammar.probs) {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            issues.push(ValidationIssue::ProbabilityOutOfRange {
                rule: rule.display(&grammar.symbols).to_string(),
                value: p,
            });
        }
    }
    for (lhs, sum) in grammar.lhs_sums().into_iter().enumerate() {
        if let Some(sum) = sum {
            if sum.is_nan() || (sum - 1.0).abs() > tolerance {
                issues.push(ValidationIssue::Unnormalized { lhs: grammar.symbols.nonterminals[lhs].clone(), sum });
            }
        }
    }
    ValidationReport { issues }
}

/// What to do with LHS distributions that do not sum to 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Reject with [`GrammarError::Unnormalized`].
    #[default]
    Require,
    /// Divide each distribution by its sum.
    Renormalize,
    /// Load as is; [`validate_cnf`] reports the problem.
    Unchecked,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub normalization: Normalization,
}

impl ParseOptions {
    pub fn renormalizing() -> Self {
        ParseOptions { normalization: Normalization::Renormalize }
    }
}

pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    parse_grammar_with(text, ParseOptions::default())
}

impl FromStr for Grammar {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grammar(s)
    }
}

#[derive(Default)]
struct Interner {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    nt_index: HashMap<String, NonterminalId>,
    t_index: HashMap<String, TerminalId>,
}

impl Interner {
    fn nonterminal(&mut self, name: &str, line: usize) -> Result<NonterminalId, GrammarError> {
        if self.t_index.contains_key(name) {
            return Err(GrammarError::SymbolClash { line, name: name.to_string() });
        }
        if let Some(&id) = self.nt_index.get(name) {
            return Ok(id);
        }
        let id = NonterminalId(self.nonterminals.len());
        self.nonterminals.push(name.to_string());
        self.nt_index.insert(name.to_string(), id);
        Ok(id)
    }

    fn terminal(&mut self, name: &str, line: usize) -> Result<TerminalId, GrammarError> {
        if self.nt_index.contains_key(name) {
            return Err(GrammarError::SymbolClash { line, name: name.to_string() });
        }
        if let Some(&id) = self.t_index.get(name) {
            return Ok(id);
        }
        let id = TerminalId(self.terminals.len());
        self.terminals.push(name.to_string());
        self.t_index.insert(name.to_string(), id);
        Ok(id)
    }
}

fn nonterminal_token(token: &str, line: usize) -> Result<&str, GrammarError> {
    if token.starts_with('"') {
        return Err(GrammarError::Syntax { line, message: format!("expected a nonterminal, found terminal {token}") });
    }
    if !valid_name(token) || token == "->" {
        return Err(GrammarError::InvalidSymbol { line, message: format!("invalid nonterminal name {token:?}") });
    }
    Ok(token)
}

fn terminal_token(token: &str, line: usize) -> Result<&str, GrammarError> {
    let inner = token.strip_prefix('"').and_then(|t| t.strip_suffix('"')).filter(|_| token.len() >= 2);
    match inner {
        Some(name) if valid_name(name) => Ok(name),
        Some(_) => Err(GrammarError::InvalidSymbol { line, message: format!("invalid terminal {token}") }),
        None => Err(GrammarError::Syntax {
            line,
            message: format!(
                "unit rule with right-hand side {token} is not in Chomsky normal form \
                 (terminals must be quoted)"
            ),
        }),
    }
}

fn probability_token(token: &str, line: usize) -> Result<f64, GrammarError> {
    let value: f64 = token
        .parse()
        .map_err(|_| GrammarError::Syntax { line, message: format!("expected a probability, found {token:?}") })?;
    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
        return Err(GrammarError::ProbabilityOutOfRange { line, value });
    }
    Ok(value)
}

pub fn parse_grammar_with(text: &str, options: ParseOptions) -> Result<Grammar, GrammarError> {
    let mut interner = Interner::default();
    let mut declared_start: Option<(String, usize)> = None;
    let mut rules: Vec<(Rule, f64)> = Vec::new();
    let mut seen: HashMap<Rule, usize> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        if let Some(rest) = content.strip_prefix("start:") {
            if !rules.is_empty() || declared_start.is_some() {
                return Err(GrammarError::Syntax {
                    line,
                    message: "start declaration must be the first non-comment line".into(),
                });
            }
            let name = rest.trim();
            if name.is_empty() {
                return Err(GrammarError::InvalidSymbol { line, message: "blank start symbol".into() });
            }
            nonterminal_token(name, line)?;
            interner.nonterminal(name, line)?;
            declared_start = Some((name.to_string(), line));
            continue;
        }

        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() < 2 || tokens[1] != "->" {
            return Err(GrammarError::Syntax { line, message: "expected `LHS -> RHS <prob>`".into() });
        }
        let lhs = interner.nonterminal(nonterminal_token(tokens[0], line)?, line)?;
        let (rule, prob) = match tokens.len() {
            4 => {
                let terminal = interner.terminal(terminal_token(tokens[2], line)?, line)?;
                (Rule::Lexical { lhs, terminal }, probability_token(tokens[3], line)?)
            }
            5 => {
                let left = interner.nonterminal(nonterminal_token(tokens[2], line)?, line)?;
                let right = interner.nonterminal(nonterminal_token(tokens[3], line)?, line)?;
                (Rule::Binary { lhs, left, right }, probability_token(tokens[4], line)?)
            }
            3 => return Err(GrammarError::Syntax { line, message: "missing right-hand side or probability".into() }),
            _ => {
                return Err(GrammarError::Syntax {
                    line,
                    message: format!(
                        "right-hand side has {} symbols; CNF allows one terminal or two nonterminals",
                        tokens.len() - 3
                    ),
                })
            }
        };
        if seen.insert(rule, line).is_some() {
            return Err(GrammarError::DuplicateRule { line, rule: tokens[..tokens.len() - 1].join(" ") });
        }
        rules.push((rule, prob));
    }

    if rules.is_empty() {
        return Err(GrammarError::Empty);
    }
    let start = match declared_start {
        Some((name, line)) => {
            let id = interner.nt_index[&name];
            let used = rules.iter().any(|(r, _)| match *r {
                Rule::Binary { lhs, left, right } => lhs == id || left == id || right == id,
                Rule::Lexical { lhs, .. } => lhs == id,
            });
            if !used {
                return Err(GrammarError::InvalidSymbol {
                    line,
                    message: format!("start symbol {name} does not occur in any rule"),
                });
            }
            name
        }
        None => interner.nonterminals[rules[0].0.lhs().0].clone(),
    };

    let symbols = SymbolTable::new(interner.nonterminals, interner.terminals, &start)?;
    let grammar = Grammar::new(symbols, rules)?;
    match options.normalization {
        Normalization::Renormalize => return grammar.renormalize(),
        Normalization::Unchecked => return Ok(grammar),
        Normalization::Require => {}
    }
    for (lhs, sum) in grammar.lhs_sums().into_iter().enumerate() {
        if let Some(sum) = sum {
            if sum.is_nan() || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(GrammarError::Unnormalized { lhs: grammar.symbols.nonterminals[lhs].clone(), sum });
            }
        }
    }
    Ok(grammar)
}
