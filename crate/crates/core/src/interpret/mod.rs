//! Topic characterization: saliency, relevance and labeled summaries.

pub mod naming;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lda::TopicModel;

pub use naming::{name_topics, ExternalNamer, ManualMapping, NamerConfig, NamingError, PassthroughNamer, TopicNamer};

pub const DEFAULT_LAMBDA: f64 = 0.6;
pub const NAMING_WORDS: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("unknown topic {0}")]
    UnknownTopic(usize),
    #[error("lambda must be in [0, 1], got {0}")]
    InvalidLambda(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceQuery {
    pub lambda: f64,
    pub top_n: usize,
}

impl RelevanceQuery {
    pub fn new(lambda: f64, top_n: usize) -> Result<Self, InterpretError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(InterpretError::InvalidLambda(lambda));
        }
        Ok(RelevanceQuery { lambda, top_n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_id: usize,
    pub label: String,
    pub top_words_frequency: Vec<String>,
    pub top_words_relevance: Vec<ScoredWord>,
    pub keywords: Vec<String>,
}

/// Descending by score, ties broken by ascending word.
fn ranked(words: &[String], scores: impl Iterator<Item = f64>) -> Vec<(usize, f64)> {
    let mut idx: Vec<(usize, f64)> = scores.enumerate().collect();
    idx.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| words[a.0].cmp(&words[b.0])));
    idx
}

/// Marginal word probability `p(w) = sum_k p(k) phi[k][w]`.
pub fn word_marginal(model: &TopicModel) -> Vec<f64> {
    let pk = model.topic_marginal();
    (0..model.vocab_size()).map(|w| model.phi.iter().zip(&pk).map(|(row, p)| row[w] * p).sum()).collect()
}

/// `sum_k p(k|w) log(p(k|w) / p(k))` for every word.
pub fn distinctiveness(model: &TopicModel) -> Vec<f64> {
    let pk = model.topic_marginal();
    (0..model.vocab_size())
        .map(|w| {
            let joint: Vec<f64> = model.phi.iter().zip(&pk).map(|(row, p)| row[w] * p).collect();
            let pw: f64 = joint.iter().sum();
            joint
                .iter()
                .zip(&pk)
                .filter(|(j, _)| **j > 0.0)
                .map(|(j, p)| {
                    let post = j / pw;
                    post * (post / p).ln()
                })
                .sum::<f64>()
                .max(0.0)
        })
        .collect()
}

/// Per-word saliency `p(w) * distinctiveness(w)`.
pub fn saliency(model: &TopicModel) -> Vec<f64> {
    word_marginal(model).iter().zip(distinctiveness(model)).map(|(p, d)| p * d).collect()
}

/// Vocabulary ranked by saliency.
pub fn saliency_table(model: &TopicModel) -> Vec<ScoredWord> {
    let s = saliency(model);
    ranked(&model.vocabulary, s.iter().copied()).into_iter().map(|(w, score)| ScoredWord { word: model.vocabulary[w].clone(), score }).collect()
}

/// `lambda log phi[k][w] + (1 - lambda) log(phi[k][w] / p(w))`, top `q.top_n` per topic.
pub fn relevance(model: &TopicModel, q: &RelevanceQuery) -> Vec<Vec<ScoredWord>> {
    let pw = word_marginal(model);
    model
        .phi
        .iter()
        .map(|row| {
            let scores = row.iter().zip(&pw).map(|(&f, &p)| q.lambda * f.ln() + (1.0 - q.lambda) * (f / p).ln());
            ranked(&model.vocabulary, scores).into_iter().take(q.top_n).map(|(w, score)| ScoredWord { word: model.vocabulary[w].clone(), score }).collect()
        })
        .collect()
}

/// The `n` highest-probability words of a topic.
pub fn top_words(model: &TopicModel, topic: usize, n: usize) -> Result<Vec<String>, InterpretError> {
    let row = model.phi.get(topic).ok_or(InterpretError::UnknownTopic(topic))?;
    Ok(ranked(&model.vocabulary, row.iter().copied()).into_iter().take(n).map(|(w, _)| model.vocabulary[w].clone()).collect())
}

/// Builds per-topic summaries; labels come from [`name_topics`].
pub fn summarize(model: &TopicModel, q: &RelevanceQuery, labels: &[String], keyword_count: usize) -> Vec<TopicSummary> {
    let rel = relevance(model, q);
    (0..model.num_topics())
        .map(|k| TopicSummary {
            topic_id: k,
            label: labels.get(k).cloned().unwrap_or_else(|| format!("topic {k}")),
            top_words_frequency: top_words(model, k, NAMING_WORDS).expect("topic in range"),
            keywords: rel[k].iter().take(keyword_count).map(|s| s.word.clone()).collect(),
            top_words_relevance: rel[k].clone(),
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::SubsetId;
    use crate::lda::{EtaMode, LdaConfig};

    pub(crate) fn toy_model(phi: Vec<Vec<f64>>, topic_mass: Vec<f64>, vocab: &[&str]) -> TopicModel {
        TopicModel {
            subset_id: SubsetId::Decarbonisation,
            config: LdaConfig { num_topics: phi.len(), eta: EtaMode::Symmetric(0.01), ..LdaConfig::default() },
            vocabulary: vocab.iter().map(|s| s.to_string()).collect(),
            vocabulary_hash: String::new(),
            doc_keys: vec![],
            doc_lengths: vec![],
            eta: vec![0.01; vocab.len()],
            theta: vec![],
            topic_mass,
            counts: None,
            phi,
        }
    }

    fn two_by_three() -> TopicModel {
        toy_model(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6]], vec![30.0, 70.0], &["grid", "heat", "wind"])
    }

    #[test]
    fn saliency_matches_hand_evaluation() {
        let m = two_by_three();
        let pk = [0.3, 0.7];
        let s = saliency(&m);
        for w in 0..3 {
            let pw = pk[0] * m.phi[0][w] + pk[1] * m.phi[1][w];
            let mut kl = 0.0;
            for k in 0..2 {
                let post = pk[k] * m.phi[k][w] / pw;
                kl += post * (post / pk[k]).ln();
            }
            assert!((s[w] - pw * kl).abs() < 1e-15, "word {w}");
        }
        // "heat" has identical phi in both topics, so p(k|w) = p(k)
        assert!(s[1].abs() < 1e-15);
        assert!(s.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn exclusive_word_distinctiveness_is_log_five() {
        let m = toy_model(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]], vec![20.0, 80.0], &["a", "b", "c"]);
        let d = distinctiveness(&m);
        assert!((d[0] - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_distinctiveness_is_mutual_information() {
        let m = two_by_three();
        let pk = m.topic_marginal();
        let mut mi = 0.0;
        let pw = word_marginal(&m);
        for k in 0..2 {
            for w in 0..3 {
                let joint = pk[k] * m.phi[k][w];
                mi += joint * (joint / (pk[k] * pw[w])).ln();
            }
        }
        let total: f64 = saliency(&m).iter().sum();
        assert!((total - mi).abs() < 1e-14);
    }

    #[test]
    fn relevance_extremes_and_mid_lambda() {
        let m = two_by_three();
        let by_phi = relevance(&m, &RelevanceQuery::new(1.0, 3).unwrap());
        let words: Vec<&str> = by_phi[0].iter().map(|s| s.word.as_str()).collect();
        assert_eq!(words, ["grid", "heat", "wind"]);
        assert_eq!(words, top_words(&m, 0, 3).unwrap());

        let by_lift = relevance(&m, &RelevanceQuery::new(0.0, 3).unwrap());
        let pw = word_marginal(&m);
        let lifts: Vec<f64> = (0..3).map(|w| m.phi[1][w] / pw[w]).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| lifts[b].partial_cmp(&lifts[a]).unwrap());
        let got: Vec<&str> = by_lift[1].iter().map(|s| s.word.as_str()).collect();
        let want: Vec<&str> = order.iter().map(|&w| m.vocabulary[w].as_str()).collect();
        assert_eq!(got, want);

        let mid = relevance(&m, &RelevanceQuery::new(0.6, 3).unwrap());
        for s in &mid[0] {
            let w = m.vocabulary.iter().position(|v| *v == s.word).unwrap();
            let hand = 0.6 * m.phi[0][w].ln() + 0.4 * (m.phi[0][w] / pw[w]).ln();
            assert!((s.score - hand).abs() < 1e-14);
        }
        assert!(RelevanceQuery::new(1.5, 3).is_err());
    }

    #[test]
    fn top_words_edges() {
        let m = toy_model(vec![vec![0.25, 0.25, 0.5]], vec![1.0], &["b", "a", "c"]);
        assert_eq!(top_words(&m, 0, 3).unwrap(), ["c", "a", "b"]);
        assert!(top_words(&m, 0, 0).unwrap().is_empty());
        assert_eq!(top_words(&m, 1, 3), Err(InterpretError::UnknownTopic(1)));
        for n in 0..3 {
            let a = top_words(&m, 0, n).unwrap();
            let b = top_words(&m, 0, n + 1).unwrap();
            assert_eq!(a[..], b[..n]);
        }
    }

    #[test]
    fn relevance_invariant_to_phi_scaling() {
        let m = two_by_three();
        let mut scaled = m.clone();
        for row in &mut scaled.phi {
            for x in row.iter_mut() {
                *x *= 3.7;
            }
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= t);
        }
        for lambda in [0.0, 0.3, 0.6, 1.0] {
            let q = RelevanceQuery::new(lambda, 3).unwrap();
            let a: Vec<Vec<String>> = relevance(&m, &q).into_iter().map(|t| t.into_iter().map(|s| s.word).collect()).collect();
            let b: Vec<Vec<String>> = relevance(&scaled, &q).into_iter().map(|t| t.into_iter().map(|s| s.word).collect()).collect();
            assert_eq!(a, b);
        }
    }
}
