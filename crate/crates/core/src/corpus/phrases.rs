use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const JOINER: char = '_';

/// Count-based collocation scorer:
/// `(count(a,b) - min_count) * N / (count(a) * count(b))`, where `N` is the
/// number of distinct tokens in the scored stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhraseScorer {
    pub min_count: u64,
    pub threshold: f64,
}

impl Default for PhraseScorer {
    fn default() -> Self {
        PhraseScorer { min_count: 5, threshold: 10.0 }
    }
}

/// Unigram and adjacent-pair statistics of a token stream.
#[derive(Debug, Default)]
pub struct PairCounts {
    pub unigrams: HashMap<String, u64>,
    pub pairs: HashMap<(String, String), u64>,
}

impl PairCounts {
    pub fn from_docs<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut counts = PairCounts::default();
        for doc in docs {
            for t in doc {
                *counts.unigrams.entry(t.as_ref().to_string()).or_default() += 1;
            }
            for w in doc.windows(2) {
                *counts.pairs.entry((w[0].as_ref().to_string(), w[1].as_ref().to_string())).or_default() += 1;
            }
        }
        counts
    }

    pub fn vocab_size(&self) -> usize {
        self.unigrams.len()
    }
}

impl PhraseScorer {
    pub fn new(min_count: u64, threshold: f64) -> Self {
        assert!(min_count >= 1, "min_count must be at least 1");
        PhraseScorer { min_count, threshold }
    }

    pub fn score(&self, pair_count: u64, count_a: u64, count_b: u64, vocab_size: usize) -> f64 {
        (pair_count as f64 - self.min_count as f64) * vocab_size as f64 / (count_a as f64 * count_b as f64)
    }

    /// Every adjacent pair that clears both the count and score thresholds, with its score.
    pub fn phrases(&self, counts: &PairCounts) -> BTreeMap<(String, String), f64> {
        let n = counts.vocab_size();
        counts
            .pairs
            .iter()
            .filter(|(_, &c)| c >= self.min_count)
            .filter_map(|((a, b), &c)| {
                let s = self.score(c, counts.unigrams[a], counts.unigrams[b], n);
                (s >= self.threshold).then(|| ((a.clone(), b.clone()), s))
            })
            .collect()
    }
}

/// Result of one scoring pass over a corpus.
#[derive(Debug)]
pub struct PhrasePass {
    pub phrases: BTreeMap<(String, String), f64>,
    /// Joined token for every qualifying adjacent occurrence, per document.
    pub emitted: Vec<Vec<String>>,
    /// Documents with qualifying pairs merged greedily left to right.
    pub merged: Vec<Vec<String>>,
}

pub fn join(a: &str, b: &str) -> String {
    format!("{a}{JOINER}{b}")
}

pub fn phrase_pass<S: AsRef<str>>(docs: &[Vec<S>], scorer: &PhraseScorer) -> PhrasePass {
    let counts = PairCounts::from_docs(docs);
    let phrases = scorer.phrases(&counts);
    let qualifies = |a: &str, b: &str| phrases.contains_key(&(a.to_string(), b.to_string()));

    let mut emitted = Vec::with_capacity(docs.len());
    let mut merged = Vec::with_capacity(docs.len());
    for doc in docs {
        let toks: Vec<&str> = doc.iter().map(|t| t.as_ref()).collect();
        emitted.push(toks.windows(2).filter(|w| qualifies(w[0], w[1])).map(|w| join(w[0], w[1])).collect());
        let mut out = Vec::with_capacity(toks.len());
        let mut i = 0;
        while i < toks.len() {
            if i + 1 < toks.len() && qualifies(toks[i], toks[i + 1]) {
                out.push(join(toks[i], toks[i + 1]));
                i += 2;
            } else {
                out.push(toks[i].to_string());
                i += 1;
            }
        }
        merged.push(out);
    }
    PhrasePass { phrases, emitted, merged }
}

/// Appends bigram and trigram tokens to each document, keeping the unigrams.
///
/// The first pass scores the raw streams; the second scores the streams with
/// first-pass phrases merged, which is where trigrams come from. Tokens with
/// more than three parts are not emitted.
pub fn detect_phrases(docs: &[Vec<String>], scorer: &PhraseScorer) -> Vec<Vec<String>> {
    let first = phrase_pass(docs, scorer);
    let second = phrase_pass(&first.merged, scorer);
    docs.iter()
        .zip(first.emitted)
        .zip(second.emitted)
        .map(|((doc, bigrams), longer)| {
            let mut out = doc.clone();
            out.extend(bigrams);
            out.extend(longer.into_iter().filter(|t| t.split(JOINER).count() <= 3));
            out
        })
        .collect()
}
