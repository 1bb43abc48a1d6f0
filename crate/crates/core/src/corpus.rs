//! Training corpora: whitespace-tokenized sentences merged into sentence
//! types with frequencies.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("corpus contains no sentences")]
    Empty,
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("token {0:?} is empty or contains whitespace")]
    BadToken(String),
    #[error("sentence frequency must be positive")]
    ZeroFrequency,
}

/// A non-empty token sequence `w_1 ... w_n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(CorpusError::EmptySentence);
        }
        if let Some(bad) = tokens.iter().find(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(CorpusError::BadToken(bad.clone()));
        }
        Ok(Sentence { tokens })
    }

    /// Splits on whitespace.
    pub fn parse(line: &str) -> Result<Self, CorpusError> {
        Sentence::new(line.split_whitespace())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Sentence types in first-occurrence order with their frequencies `f(y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    types: Vec<Sentence>,
    freqs: Vec<u64>,
    index: HashMap<Sentence, usize>,
    total: u64,
}

impl Corpus {
    pub fn from_sentences<I>(sentences: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = Sentence>,
    {
        Corpus::from_counts(sentences.into_iter().map(|s| (s, 1)))
    }

    /// Builds a corpus from `(sentence, frequency)` pairs; repeated
    /// sentences accumulate.
    pub fn from_counts<I>(pairs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (Sentence, u64)>,
    {
        let mut corpus = Corpus { types: Vec::new(), freqs: Vec::new(), index: HashMap::new(), total: 0 };
        for (sentence, freq) in pairs {
            if freq == 0 {
                return Err(CorpusError::ZeroFrequency);
            }
            corpus.total += freq;
            match corpus.index.get(&sentence) {
                Some(&i) => corpus.freqs[i] += freq,
                None => {
                    corpus.index.insert(sentence.clone(), corpus.types.len());
                    corpus.types.push(sentence);
                    corpus.freqs.push(freq);
                }
            }
        }
        if corpus.total == 0 {
            return Err(CorpusError::Empty);
        }
        Ok(corpus)
    }

    pub fn types(&self) -> &[Sentence] {
        &self.types
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    /// `(sentence, f(y))` in type order.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (&Sentence, u64)> + ExactSizeIterator {
        self.types.iter().zip(self.freqs.iter().copied())
    }

    pub fn freq(&self, sentence: &Sentence) -> u64 {
        self.index.get(sentence).map_or(0, |&i| self.freqs[i])
    }

    /// Number of sentence tokens `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `f(y) / N`, zero for sentences outside the corpus.
    pub fn empirical_prob(&self, sentence: &Sentence) -> f64 {
        self.freq(sentence) as f64 / self.total as f64
    }

    /// Multiplies every frequency by `k`.
    pub fn scaled(&self, k: u64) -> Result<Corpus, CorpusError> {
        Corpus::from_counts(self.iter().map(|(s, f)| (s.clone(), f * k)))
    }
}

/// One sentence per non-blank line, whitespace-separated tokens.
pub fn load_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let sentences =
        text.lines().filter(|line| !line.trim().is_empty()).map(Sentence::parse).collect::<Result<Vec<_>, _>>()?;
    Corpus::from_sentences(sentences)
}
