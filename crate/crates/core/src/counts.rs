//! Expected rule and category counts computed from inside/outside charts.
//!
//! For a sentence `w_1 ... w_n` with probability `P`:
//!
//! ```text
//! C(A)      = 1/P * sum_{s <= t} e(s,t,A) f(s,t,A)
//! C(A -> a) = 1/P * sum_{t : w_t = a} e(t,t,A) f(t,t,A)
//! C(A -> B C) = 1/P * sum_{s < t} sum_{s <= r < t} p(A -> B C) e(s,r,B) e(r+1,t,C) f(s,t,A)
//! ```

use thiserror::Error;

use crate::chart::SentenceAnalysis;
use crate::grammar::{Grammar, NonterminalId, Rule, RuleId, TerminalId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountError {
    #[error("sentence has probability 0 under the grammar")]
    ZeroProbability,
}

/// Rule counts in canonical rule order and category counts in nonterminal
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub rule_counts: Vec<f64>,
    pub cat_counts: Vec<f64>,
}

impl CountTable {
    pub fn zeros(grammar: &Grammar) -> Self {
        CountTable { rule_counts: vec![0.0; grammar.rules().len()], cat_counts: vec![0.0; grammar.nonterminal_count()] }
    }

    pub fn rule(&self, id: RuleId) -> f64 {
        self.rule_counts[id.0]
    }

    pub fn category(&self, a: NonterminalId) -> f64 {
        self.cat_counts[a.0]
    }

    /// `self += weight * other`, entry by entry.
    pub fn add_weighted(&mut self, other: &CountTable, weight: f64) {
        assert_eq!(self.rule_counts.len(), other.rule_counts.len(), "count tables over different grammars");
        assert_eq!(self.cat_counts.len(), other.cat_counts.len(), "count tables over different grammars");
        for (acc, c) in self.rule_counts.iter_mut().zip(&other.rule_counts) {
            *acc += weight * c;
        }
        for (acc, c) in self.cat_counts.iter_mut().zip(&other.cat_counts) {
            *acc += weight * c;
        }
    }
}

fn require_parse(analysis: &SentenceAnalysis) -> Result<f64, CountError> {
    if analysis.prob > 0.0 {
        Ok(analysis.prob)
    } else {
        Err(CountError::ZeroProbability)
    }
}

pub fn rule_count_lexical(
    analysis: &SentenceAnalysis,
    lhs: NonterminalId,
    terminal: TerminalId,
) -> Result<f64, CountError> {
    let prob = require_parse(analysis)?;
    let mut total = 0.0;
    for t in 1..=analysis.len() {
        if analysis.terminal_at(t) == Some(terminal) {
            total += analysis.inside.get(t, t, lhs) * analysis.outside.get(t, t, lhs);
        }
    }
    Ok(total / prob)
}

/// Uses the rule's probability from `grammar`; a rule absent from the
/// grammar has probability 0 and count 0.
pub fn rule_count_binary(
    analysis: &SentenceAnalysis,
    grammar: &Grammar,
    lhs: NonterminalId,
    left: NonterminalId,
    right: NonterminalId,
) -> Result<f64, CountError> {
    let prob = require_parse(analysis)?;
    let p = grammar.rule_id(&Rule::Binary { lhs, left, right }).map_or(0.0, |id| grammar.prob(id));
    let n = analysis.len();
    let (e, f) = (&analysis.inside, &analysis.outside);
    let mut total = 0.0;
    for s in 1..n {
        for t in s + 1..=n {
            for r in s..t {
                total += p * e.get(s, r, left) * e.get(r + 1, t, right) * f.get(s, t, lhs);
            }
        }
    }
    Ok(total / prob)
}

pub fn rule_count(analysis: &SentenceAnalysis, grammar: &Grammar, id: RuleId) -> Result<f64, CountError> {
    match grammar.rule(id) {
        Rule::Lexical { lhs, terminal } => rule_count_lexical(analysis, lhs, terminal),
        Rule::Binary { lhs, left, right } => rule_count_binary(analysis, grammar, lhs, left, right),
    }
}

pub fn category_count(analysis: &SentenceAnalysis, a: NonterminalId) -> Result<f64, CountError> {
    let prob = require_parse(analysis)?;
    let n = analysis.len();
    let mut total = 0.0;
    for s in 1..=n {
        for t in s..=n {
            total += analysis.inside.get(s, t, a) * analysis.outside.get(s, t, a);
        }
    }
    Ok(total / prob)
}

/// Every rule count and every category count for one sentence.
pub fn sentence_counts(analysis: &SentenceAnalysis, grammar: &Grammar) -> Result<CountTable, CountError> {
    require_parse(analysis)?;
    Ok(CountTable {
        rule_counts: grammar.rule_ids().map(|id| rule_count(analysis, grammar, id)).collect::<Result<_, _>>()?,
        cat_counts: grammar.nonterminal_ids().map(|a| category_count(analysis, a)).collect::<Result<_, _>>()?,
    })
}

/// Weighted entrywise sum, accumulated in the order given.
pub fn aggregate<'a, I>(grammar: &Grammar, tables: I) -> CountTable
where
    I: IntoIterator<Item = (&'a CountTable, f64)>,
{
    let mut total = CountTable::zeros(grammar);
    for (table, weight) in tables {
        total.add_weighted(table, weight);
    }
    total
}
