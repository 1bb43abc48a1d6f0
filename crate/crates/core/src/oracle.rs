//! Brute-force EM for CNF grammars by explicit parse-tree enumeration.
//!
//! Nothing here touches the inside/outside charts. Trees are enumerated
//! from a packed forest that only records which rules can derive which
//! spans; probabilities enter afterwards through [`tree_stats`], as the
//! product `prod_r p(r)^{f_r(x)}`. Expected frequencies are then plain
//! sums over the enumerated trees.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{Corpus, Sentence};
use crate::grammar::{Grammar, GrammarError, NonterminalId, Rule, RuleId, SymbolTable, TerminalId};

pub const DEFAULT_TREE_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("sentence has {count} parse trees, more than the cap of {cap}")]
    CapExceeded { count: u128, cap: usize },
    #[error("sentence has probability 0 under the grammar")]
    ZeroProbability,
    #[error("no sentence in the corpus has a parse")]
    NoParseableSentences,
    #[error("tree uses rule {0} which is not in the grammar")]
    RuleNotInGrammar(String),
    #[error("invalid span triple: {0}")]
    InvalidTriple(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// A syntax tree over a sentence; every node carries its 1-based inclusive
/// span. Subtrees are shared between trees of the same enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    label: NonterminalId,
    span: (usize, usize),
    kind: TreeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeKind {
    Leaf { terminal: TerminalId },
    Branch { left: Arc<ParseTree>, right: Arc<ParseTree> },
}

impl ParseTree {
    pub fn leaf(label: NonterminalId, position: usize, terminal: TerminalId) -> Self {
        ParseTree { label, span: (position, position), kind: TreeKind::Leaf { terminal } }
    }

    /// Panics unless the children's spans are adjacent.
    pub fn branch(label: NonterminalId, left: Arc<ParseTree>, right: Arc<ParseTree>) -> Self {
        assert_eq!(left.span.1 + 1, right.span.0, "children spans must be adjacent");
        ParseTree { label, span: (left.span.0, right.span.1), kind: TreeKind::Branch { left, right } }
    }

    pub fn label(&self) -> NonterminalId {
        self.label
    }

    pub fn span(&self) -> (usize, usize) {
        self.span
    }

    pub fn kind(&self) -> &TreeKind {
        &self.kind
    }

    pub fn children(&self) -> Option<(&ParseTree, &ParseTree)> {
        match &self.kind {
            TreeKind::Branch { left, right } => Some((left, right)),
            TreeKind::Leaf { .. } => None,
        }
    }

    /// The grammar rule applied at this node.
    pub fn rule(&self) -> Rule {
        match &self.kind {
            TreeKind::Leaf { terminal } => Rule::Lexical { lhs: self.label, terminal: *terminal },
            TreeKind::Branch { left, right } => Rule::Binary { lhs: self.label, left: left.label, right: right.label },
        }
    }

    /// Nodes in preorder.
    pub fn nodes(&self) -> Vec<&ParseTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            if let Some((l, r)) = node.children() {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    pub fn bracketed<'a>(&'a self, symbols: &'a SymbolTable) -> Bracketed<'a> {
        Bracketed { tree: self, symbols }
    }
}

/// `(S (S a) (S a))` rendering of a tree.
pub struct Bracketed<'a> {
    tree: &'a ParseTree,
    symbols: &'a SymbolTable,
}

impl fmt::Display for Bracketed<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = self.symbols.nonterminal_name(self.tree.label);
        match &self.tree.kind {
            TreeKind::Leaf { terminal } => write!(f, "({label} {})", self.symbols.terminal_name(*terminal)),
            TreeKind::Branch { left, right } => {
                write!(f, "({label} {} {})", left.bracketed(self.symbols), right.bracketed(self.symbols))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Alternative {
    Lexical { terminal: TerminalId },
    Binary { split: usize, left: NonterminalId, right: NonterminalId },
}

/// Which rules can derive which spans, ignoring probabilities.
struct Forest {
    n: usize,
    nts: usize,
    alternatives: Vec<Vec<Alternative>>,
    counts: Vec<u128>,
}

impl Forest {
    fn cell(&self, s: usize, t: usize, a: NonterminalId) -> usize {
        ((s - 1) * self.n + (t - 1)) * self.nts + a.0
    }

    fn build(grammar: &Grammar, sentence: &Sentence) -> Self {
        let n = sentence.len();
        let nts = grammar.nonterminal_count();
        let mut forest = Forest { n, nts, alternatives: vec![Vec::new(); n * n * nts], counts: vec![0; n * n * nts] };
        for (i, token) in sentence.tokens().iter().enumerate() {
            let t = i + 1;
            for rule in grammar.rules() {
                if let Rule::Lexical { lhs, terminal } = *rule {
                    if grammar.symbols().terminal_name(terminal) == token {
                        let c = forest.cell(t, t, lhs);
                        forest.alternatives[c].push(Alternative::Lexical { terminal });
                        forest.counts[c] += 1;
                    }
                }
            }
        }
        for len in 2..=n {
            for s in 1..=n - len + 1 {
                let t = s + len - 1;
                for split in s..t {
                    for rule in grammar.rules() {
                        let Rule::Binary { lhs, left, right } = *rule else { continue };
                        let l = forest.counts[forest.cell(s, split, left)];
                        let r = forest.counts[forest.cell(split + 1, t, right)];
                        if l > 0 && r > 0 {
                            let c = forest.cell(s, t, lhs);
                            forest.alternatives[c].push(Alternative::Binary { split, left, right });
                            forest.counts[c] = forest.counts[c].saturating_add(l.saturating_mul(r));
                        }
                    }
                }
            }
        }
        forest
    }

    fn unpack(
        &self,
        s: usize,
        t: usize,
        a: NonterminalId,
        memo: &mut Vec<Option<Arc<Vec<Arc<ParseTree>>>>>,
    ) -> Arc<Vec<Arc<ParseTree>>> {
        let c = self.cell(s, t, a);
        if let Some(done) = &memo[c] {
            return Arc::clone(done);
        }
        let mut trees = Vec::new();
        for alt in &self.alternatives[c] {
            match *alt {
                Alternative::Lexical { terminal } => trees.push(Arc::new(ParseTree::leaf(a, s, terminal))),
                Alternative::Binary { split, left, right } => {
                    let lefts = self.unpack(s, split, left, memo);
                    let rights = self.unpack(split + 1, t, right, memo);
                    for l in lefts.iter() {
                        for r in rights.iter() {
                            trees.push(Arc::new(ParseTree::branch(a, Arc::clone(l), Arc::clone(r))));
                        }
                    }
                }
            }
        }
        let trees = Arc::new(trees);
        memo[c] = Some(Arc::clone(&trees));
        trees
    }
}

/// Number of trees in `T(y)` without materializing them (saturating).
pub fn count_trees(grammar: &Grammar, sentence: &Sentence) -> u128 {
    let forest = Forest::build(grammar, sentence);
    forest.counts[forest.cell(1, sentence.len(), grammar.start())]
}

/// Every tree rooted at the start symbol whose yield is `sentence`.
///
/// Order: at each node, split point ascending, then binary rule index
/// ascending; children vary lexicographically (left, then right).
pub fn enumerate_trees(grammar: &Grammar, sentence: &Sentence, cap: usize) -> Result<Vec<ParseTree>, OracleError> {
    let forest = Forest::build(grammar, sentence);
    let n = sentence.len();
    let count = forest.counts[forest.cell(1, n, grammar.start())];
    if count > cap as u128 {
        return Err(OracleError::CapExceeded { count, cap });
    }
    let mut memo = vec![None; forest.counts.len()];
    let roots = forest.unpack(1, n, grammar.start(), &mut memo);
    Ok(roots.iter().map(|t| (**t).clone()).collect())
}

/// `p(x)` and rule/category frequencies of one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStats {
    pub prob: f64,
    pub rule_freq: Vec<u32>,
    pub cat_freq: Vec<u32>,
}

pub fn tree_stats(grammar: &Grammar, tree: &ParseTree) -> Result<TreeStats, OracleError> {
    let mut rule_freq = vec![0u32; grammar.rules().len()];
    for node in tree.nodes() {
        let rule = node.rule();
        let id = grammar
            .rule_id(&rule)
            .ok_or_else(|| OracleError::RuleNotInGrammar(rule.display(grammar.symbols()).to_string()))?;
        rule_freq[id.0] += 1;
    }
    let cat_freq =
        grammar.nonterminal_ids().map(|a| grammar.rules_for(a).iter().map(|id| rule_freq[id.0]).sum()).collect();
    let prob = grammar.rule_ids().map(|id| grammar.prob(id).powi(rule_freq[id.0] as i32)).product();
    Ok(TreeStats { prob, rule_freq, cat_freq })
}

/// `p(y) = sum_{x in T(y)} p(x)`.
pub fn sentence_prob_oracle(grammar: &Grammar, sentence: &Sentence, cap: usize) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for tree in enumerate_trees(grammar, sentence, cap)? {
        total += tree_stats(grammar, &tree)?.prob;
    }
    Ok(total)
}

/// Conditional expected frequencies `E_{p(.|y)}[f_r]` and `E_{p(.|y)}[f_A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    pub prob: f64,
    pub tree_count: usize,
    pub rule: Vec<f64>,
    pub category: Vec<f64>,
}

pub fn expectations(grammar: &Grammar, sentence: &Sentence, cap: usize) -> Result<Expectations, OracleError> {
    let trees = enumerate_trees(grammar, sentence, cap)?;
    let stats = trees.iter().map(|x| tree_stats(grammar, x)).collect::<Result<Vec<_>, _>>()?;
    let prob: f64 = stats.iter().map(|s| s.prob).sum();
    if prob.is_nan() || prob <= 0.0 {
        return Err(OracleError::ZeroProbability);
    }
    let mut rule = vec![0.0; grammar.rules().len()];
    let mut category = vec![0.0; grammar.nonterminal_count()];
    for st in &stats {
        let posterior = st.prob / prob;
        for (acc, &f) in rule.iter_mut().zip(&st.rule_freq) {
            *acc += posterior * f as f64;
        }
        for (acc, &f) in category.iter_mut().zip(&st.cat_freq) {
            *acc += posterior * f as f64;
        }
    }
    Ok(Expectations { prob, tree_count: trees.len(), rule, category })
}

pub fn expected_freq(grammar: &Grammar, sentence: &Sentence, rule: RuleId, cap: usize) -> Result<f64, OracleError> {
    Ok(expectations(grammar, sentence, cap)?.rule[rule.0])
}

pub fn expected_cat_freq(
    grammar: &Grammar,
    sentence: &Sentence,
    a: NonterminalId,
    cap: usize,
) -> Result<f64, OracleError> {
    Ok(expectations(grammar, sentence, cap)?.category[a.0])
}

/// Anchored binary-rule occurrence `(s,t,A) (s,r,B) (r+1,t,C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanTriple {
    pub start: usize,
    pub split: usize,
    pub end: usize,
    pub parent: NonterminalId,
    pub left: NonterminalId,
    pub right: NonterminalId,
}

impl SpanTriple {
    /// Requires `1 <= start <= split < end`.
    pub fn new(
        start: usize,
        split: usize,
        end: usize,
        parent: NonterminalId,
        left: NonterminalId,
        right: NonterminalId,
    ) -> Result<Self, OracleError> {
        if !(1 <= start && start <= split && split < end) {
            return Err(OracleError::InvalidTriple(format!("need 1 <= s <= r < t, got s={start} r={split} t={end}")));
        }
        Ok(SpanTriple { start, split, end, parent, left, right })
    }

    /// Every valid triple of a binary rule over a sentence of length `n`.
    pub fn all_for(parent: NonterminalId, left: NonterminalId, right: NonterminalId, n: usize) -> Vec<SpanTriple> {
        let mut out = Vec::new();
        for start in 1..n {
            for end in start + 1..=n {
                for split in start..end {
                    out.push(SpanTriple { start, split, end, parent, left, right });
                }
            }
        }
        out
    }
}

/// 1 iff `tree` contains the anchored occurrence `triple`.
pub fn anchored_indicator(tree: &ParseTree, triple: &SpanTriple) -> u32 {
    let hit = tree.nodes().into_iter().any(|node| {
        node.label == triple.parent
            && node.span == (triple.start, triple.end)
            && node.children().is_some_and(|(l, r)| {
                l.label == triple.left
                    && l.span == (triple.start, triple.split)
                    && r.label == triple.right
                    && r.span == (triple.split + 1, triple.end)
            })
    });
    u32::from(hit)
}

/// Lexical analogue: 1 iff `tree` has a leaf `A -> a` at position `t`.
pub fn anchored_lexical_indicator(tree: &ParseTree, position: usize, lhs: NonterminalId, terminal: TerminalId) -> u32 {
    let hit = tree.nodes().into_iter().any(|node| {
        node.label == lhs
            && node.span == (position, position)
            && matches!(node.kind, TreeKind::Leaf { terminal: x } if x == terminal)
    });
    u32::from(hit)
}

/// One EM iteration computed from enumerated trees:
/// `p^(r) = sum_y p~(y) E[f_r] / sum_y p~(y) E[f_A]` with `A = lhs(r)`.
///
/// Unparseable sentence types are skipped; nonterminals with zero expected
/// frequency keep their distribution.
pub fn em_step(grammar: &Grammar, corpus: &Corpus, cap: usize) -> Result<Grammar, OracleError> {
    let mut numerators = vec![0.0; grammar.rules().len()];
    let mut denominators = vec![0.0; grammar.nonterminal_count()];
    let mut parseable = 0;
    for (sentence, _) in corpus.iter() {
        let expected = match expectations(grammar, sentence, cap) {
            Ok(e) => e,
            Err(OracleError::ZeroProbability) => continue,
            Err(e) => return Err(e),
        };
        parseable += 1;
        let weight = corpus.empirical_prob(sentence);
        for (acc, e) in numerators.iter_mut().zip(&expected.rule) {
            *acc += weight * e;
        }
        for (acc, e) in denominators.iter_mut().zip(&expected.category) {
            *acc += weight * e;
        }
    }
    if parseable == 0 {
        return Err(OracleError::NoParseableSentences);
    }
    let mut probs = grammar.probs().to_vec();
    for id in grammar.rule_ids() {
        let denominator = denominators[grammar.rule(id).lhs().0];
        if denominator > 0.0 {
            probs[id.0] = (numerators[id.0] / denominator).min(1.0);
        }
    }
    Ok(grammar.with_probs(probs)?)
}
