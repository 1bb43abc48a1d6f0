//! Seeded random CNF grammars and corpora shared by the integration tests.
#![allow(dead_code)]

use pcfg_em::grammar::{parse_grammar, Grammar, NonterminalId, Rule};
use pcfg_em::oracle::count_trees;
use pcfg_em::{format_number, Corpus, Sentence};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sentences with more parse trees than this are redrawn so that brute-force
/// enumeration stays cheap.
pub const TREE_LIMIT: u128 = 3000;
pub const ORACLE_CAP: usize = TREE_LIMIT as usize;

pub const G0: &str = "S -> S S 0.5\nS -> \"a\" 0.5\n";
pub const G1: &str = "S -> A B 1.0\nA -> \"a\" 1.0\nB -> \"b\" 1.0\n";

pub struct Case {
    pub seed: u64,
    pub grammar: Grammar,
    pub corpus: Corpus,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 2-5 nonterminals, 1-4 terminals, every terminal reachable through some
/// lexical rule, random normalized probabilities.
pub fn random_grammar(rng: &mut ChaCha8Rng) -> Grammar {
    let nts = rng.gen_range(2..=5);
    let terms = rng.gen_range(1..=4);
    let density = rng.gen_range(0.15..0.5);

    let mut rules: Vec<Vec<String>> = vec![Vec::new(); nts];
    for t in 0..terms {
        let owner = rng.gen_range(0..nts);
        for (a, own) in rules.iter_mut().enumerate() {
            if a == owner || rng.gen_bool(0.35) {
                own.push(format!("N{a} -> \"t{t}\""));
            }
        }
    }
    for (a, own) in rules.iter_mut().enumerate() {
        for b in 0..nts {
            for c in 0..nts {
                if rng.gen_bool(density) {
                    own.push(format!("N{a} -> N{b} N{c}"));
                }
            }
        }
    }
    // the start symbol must be able to build multi-token sentences
    if !rules[0].iter().any(|r| !r.contains('"')) {
        let (b, c) = (rng.gen_range(0..nts), rng.gen_range(0..nts));
        rules[0].push(format!("N0 -> N{b} N{c}"));
    }

    let mut text = String::from("start: N0\n");
    for own in rules.iter().filter(|own| !own.is_empty()) {
        let weights: Vec<f64> = own.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (rule, w) in own.iter().zip(weights) {
            text.push_str(&format!("{rule} {}\n", format_number(w / total)));
        }
    }
    parse_grammar(&text).unwrap_or_else(|e| panic!("generated grammar rejected: {e}\n{text}"))
}

/// Top-down derivation choosing rules uniformly; `None` if it grows past
/// `max_len` tokens or gets stuck.
fn derive(grammar: &Grammar, rng: &mut ChaCha8Rng, max_len: usize) -> Option<Sentence> {
    fn expand(
        g: &Grammar,
        rng: &mut ChaCha8Rng,
        a: NonterminalId,
        depth: usize,
        out: &mut Vec<String>,
        max: usize,
    ) -> bool {
        if out.len() > max {
            return false;
        }
        let options = g.rules_for(a);
        let lexical: Vec<_> = options.iter().filter(|&&id| !g.rule(id).is_binary()).collect();
        let pick = if depth >= 6 && !lexical.is_empty() {
            **lexical.choose(rng).unwrap()
        } else {
            match options.choose(rng) {
                Some(&id) => id,
                None => return false,
            }
        };
        match g.rule(pick) {
            Rule::Lexical { terminal, .. } => {
                out.push(g.symbols().terminal_name(terminal).to_string());
                true
            }
            Rule::Binary { left, right, .. } => {
                depth < 12 && expand(g, rng, left, depth + 1, out, max) && expand(g, rng, right, depth + 1, out, max)
            }
        }
    }
    let mut tokens = Vec::new();
    if expand(grammar, rng, grammar.start(), 0, &mut tokens, max_len) && tokens.len() <= max_len {
        Sentence::new(tokens).ok()
    } else {
        None
    }
}

fn random_tokens(grammar: &Grammar, rng: &mut ChaCha8Rng, len: usize) -> Sentence {
    let terms = grammar.symbols().terminals();
    Sentence::new((0..len).map(|_| terms.choose(rng).unwrap().clone())).unwrap()
}

/// 1-10 sentence types of uniform length 1-7 with frequencies 1-5. Most
/// types are derived from the grammar so that they parse; the rest are
/// uniform token strings and may not.
pub fn random_corpus(grammar: &Grammar, rng: &mut ChaCha8Rng) -> Corpus {
    let types = rng.gen_range(1..=10);
    let mut pairs = Vec::new();
    while pairs.len() < types {
        let len = rng.gen_range(1..=7);
        let sentence = if rng.gen_bool(0.75) {
            match (0..60).find_map(|_| derive(grammar, rng, len).filter(|s| s.len() == len)) {
                Some(s) => s,
                None => random_tokens(grammar, rng, len),
            }
        } else {
            random_tokens(grammar, rng, len)
        };
        if count_trees(grammar, &sentence) > TREE_LIMIT {
            continue;
        }
        pairs.push((sentence, rng.gen_range(1..=5)));
    }
    Corpus::from_counts(pairs).unwrap()
}

fn parseable_types(grammar: &Grammar, corpus: &Corpus) -> usize {
    corpus.types().iter().filter(|y| count_trees(grammar, y) > 0).count()
}

/// A grammar/corpus pair with at least one parseable sentence type.
pub fn random_case(seed: u64) -> Case {
    let mut rng = rng(seed);
    loop {
        let grammar = random_grammar(&mut rng);
        for _ in 0..5 {
            let corpus = random_corpus(&grammar, &mut rng);
            if parseable_types(&grammar, &corpus) > 0 {
                return Case { seed, grammar, corpus };
            }
        }
    }
}

pub fn random_cases(count: usize, base_seed: u64) -> Vec<Case> {
    (0..count as u64).map(|i| random_case(base_seed + i)).collect()
}

/// `|a - b| <= tol * max(|a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Catalan numbers by the convolution recurrence.
pub fn catalan(k: usize) -> u128 {
    let mut c = vec![1u128; k + 1];
    for m in 1..=k {
        c[m] = (0..m).map(|i| c[i] * c[m - 1 - i]).sum();
    }
    c[k]
}

pub fn repeat_a(n: usize) -> Sentence {
    Sentence::new(std::iter::repeat_n("a", n)).unwrap()
}
