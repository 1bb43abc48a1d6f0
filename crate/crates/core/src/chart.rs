//! Inside and outside charts for one sentence.
//!
//! Spans use 1-based inclusive coordinates `(s, t)` with `1 <= s <= t <= n`.
//! Inside entries `e(s, t, A)` are filled by increasing span length, outside
//! entries `f(s, t, A)` by decreasing span length. Arithmetic is plain
//! double precision; sentences much longer than a few hundred tokens can
//! underflow to `P = 0`.

use crate::corpus::Sentence;
use crate::grammar::{Grammar, NonterminalId, Rule, TerminalId};

/// Dense `(span x nonterminal)` table shared by both chart kinds.
#[derive(Debug, Clone, PartialEq)]
struct SpanTable {
    n: usize,
    nts: usize,
    values: Vec<f64>,
}

impl SpanTable {
    fn zeros(n: usize, nts: usize) -> Self {
        SpanTable { n, nts, values: vec![0.0; n * n * nts] }
    }

    fn offset(&self, s: usize, t: usize, a: NonterminalId) -> usize {
        assert!(
            1 <= s && s <= t && t <= self.n && a.0 < self.nts,
            "span ({s}, {t}, {}) outside chart of length {}",
            a.0,
            self.n
        );
        ((s - 1) * self.n + (t - 1)) * self.nts + a.0
    }

    fn get(&self, s: usize, t: usize, a: NonterminalId) -> f64 {
        self.values[self.offset(s, t, a)]
    }

    fn set(&mut self, s: usize, t: usize, a: NonterminalId, value: f64) {
        let i = self.offset(s, t, a);
        self.values[i] = value;
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, NonterminalId, f64)> + '_ {
        let n = self.n;
        (1..=n).flat_map(move |s| {
            (s..=n).flat_map(move |t| {
                (0..self.nts).map(move |a| (s, t, NonterminalId(a), self.get(s, t, NonterminalId(a))))
            })
        })
    }
}

/// Inside probabilities `e(s, t, A) = p(A =>* w_s ... w_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InsideChart(SpanTable);

/// Outside probabilities `f(s, t, A) = p(S =>* w_1 ... w_{s-1} A w_{t+1} ... w_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutsideChart(SpanTable);

impl InsideChart {
    pub fn len(&self) -> usize {
        self.0.n
    }

    pub fn is_empty(&self) -> bool {
        self.0.n == 0
    }

    /// Panics if the span is not addressable.
    pub fn get(&self, s: usize, t: usize, a: NonterminalId) -> f64 {
        self.0.get(s, t, a)
    }

    /// All entries, ordered by `s`, then `t`, then nonterminal.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, NonterminalId, f64)> + '_ {
        self.0.entries()
    }
}

impl OutsideChart {
    pub fn len(&self) -> usize {
        self.0.n
    }

    pub fn is_empty(&self) -> bool {
        self.0.n == 0
    }

    pub fn get(&self, s: usize, t: usize, a: NonterminalId) -> f64 {
        self.0.get(s, t, a)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, NonterminalId, f64)> + '_ {
        self.0.entries()
    }
}

/// Both charts and the sentence probability `P = e(1, n, S)`.
///
/// `prob == 0` means the sentence has no parse; the charts are still
/// complete.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceAnalysis {
    pub inside: InsideChart,
    pub outside: OutsideChart,
    pub prob: f64,
    tokens: Vec<Option<TerminalId>>,
}

impl SentenceAnalysis {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Terminal at 1-based position `t`, `None` if the token is not in the
    /// grammar's lexicon.
    pub fn terminal_at(&self, t: usize) -> Option<TerminalId> {
        self.tokens[t - 1]
    }

    pub fn is_parseable(&self) -> bool {
        self.prob > 0.0
    }
}

/// Observes chart cell reads and writes in evaluation order.
pub(crate) trait FillProbe {
    fn read_inside(&mut self, _s: usize, _t: usize) {}
    fn read_outside(&mut self, _s: usize, _t: usize) {}
    fn write(&mut self, _s: usize, _t: usize) {}
}

struct NoProbe;

impl FillProbe for NoProbe {}

fn resolve_tokens(grammar: &Grammar, sentence: &Sentence) -> Vec<Option<TerminalId>> {
    sentence.tokens().iter().map(|tok| grammar.symbols().terminal(tok)).collect()
}

pub fn inside(grammar: &Grammar, sentence: &Sentence) -> InsideChart {
    fill_inside(grammar, &resolve_tokens(grammar, sentence), &mut NoProbe)
}

pub fn outside(grammar: &Grammar, sentence: &Sentence, inside: &InsideChart) -> OutsideChart {
    assert_eq!(inside.len(), sentence.len(), "inside chart belongs to a different sentence");
    fill_outside(grammar, sentence.len(), inside, &mut NoProbe)
}

pub fn analyze(grammar: &Grammar, sentence: &Sentence) -> SentenceAnalysis {
    let tokens = resolve_tokens(grammar, sentence);
    let inside = fill_inside(grammar, &tokens, &mut NoProbe);
    let outside = fill_outside(grammar, tokens.len(), &inside, &mut NoProbe);
    let prob = inside.get(1, tokens.len(), grammar.start());
    SentenceAnalysis { inside, outside, prob, tokens }
}

pub(crate) fn fill_inside<P: FillProbe>(
    grammar: &Grammar,
    tokens: &[Option<TerminalId>],
    probe: &mut P,
) -> InsideChart {
    let n = tokens.len();
    let mut e = SpanTable::zeros(n, grammar.nonterminal_count());

    // e(t, t, A) = p(A -> w_t), zero when the rule or the token is missing
    for (i, token) in tokens.iter().enumerate() {
        let t = i + 1;
        if let Some(terminal) = token {
            for &id in grammar.lexical_rules_for(*terminal) {
                e.set(t, t, grammar.rule(id).lhs(), grammar.prob(id));
            }
        }
        probe.write(t, t);
    }

    for len in 2..=n {
        for s in 1..=n - len + 1 {
            let t = s + len - 1;
            for a in grammar.nonterminal_ids() {
                let mut total = 0.0;
                for &id in grammar.rules_for(a) {
                    let Rule::Binary { left, right, .. } = grammar.rule(id) else { continue };
                    let p = grammar.prob(id);
                    for r in s..t {
                        probe.read_inside(s, r);
                        probe.read_inside(r + 1, t);
                        total += p * e.get(s, r, left) * e.get(r + 1, t, right);
                    }
                }
                e.set(s, t, a, total);
            }
            probe.write(s, t);
        }
    }
    InsideChart(e)
}

pub(crate) fn fill_outside<P: FillProbe>(
    grammar: &Grammar,
    n: usize,
    inside: &InsideChart,
    probe: &mut P,
) -> OutsideChart {
    let mut f = SpanTable::zeros(n, grammar.nonterminal_count());
    if n == 0 {
        return OutsideChart(f);
    }
    f.set(1, n, grammar.start(), 1.0);
    probe.write(1, n);

    for len in (1..n).rev() {
        for s in 1..=n - len + 1 {
            let t = s + len - 1;
            for a in grammar.nonterminal_ids() {
                let mut total = 0.0;
                // parent C -> B A: A is the right child, sibling B spans (r, s-1)
                for &id in grammar.binary_with_right(a) {
                    let Rule::Binary { lhs: parent, left: sibling, .. } = grammar.rule(id) else { unreachable!() };
                    let p = grammar.prob(id);
                    for r in 1..s {
                        probe.read_outside(r, t);
                        probe.read_inside(r, s - 1);
                        total += f.get(r, t, parent) * p * inside.get(r, s - 1, sibling);
                    }
                }
                // parent C -> A B: A is the left child, sibling B spans (t+1, r)
                for &id in grammar.binary_with_left(a) {
                    let Rule::Binary { lhs: parent, right: sibling, .. } = grammar.rule(id) else { unreachable!() };
                    let p = grammar.prob(id);
                    for r in t + 1..=n {
                        probe.read_outside(s, r);
                        probe.read_inside(t + 1, r);
                        total += f.get(s, r, parent) * p * inside.get(t + 1, r, sibling);
                    }
                }
                f.set(s, t, a, total);
            }
            probe.write(s, t);
        }
    }
    OutsideChart(f)
}
