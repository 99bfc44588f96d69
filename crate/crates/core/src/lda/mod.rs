//! Latent Dirichlet allocation trained by collapsed Gibbs sampling.

mod eta;
mod sampler;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{DocumentKey, SubCorpus, SubsetId};
use crate::rng::label_hash;

pub use eta::{estimate_eta, ETA_FLOOR};
use sampler::CountAccumulator;
pub use sampler::GibbsSampler;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("sub-corpus has no documents or an empty vocabulary")]
    EmptyCorpus,
    #[error("document {0} has no in-vocabulary tokens")]
    EmptyDocument(DocumentKey),
    #[error("unknown document {0}")]
    UnknownKey(DocumentKey),
    #[error("prior update produced a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Symmetric(f64),
    /// Learned per word, starting from `1 / num_topics`.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub num_topics: usize,
    /// Symmetric per-topic concentration of the document-topic prior.
    pub alpha: f64,
    pub eta: EtaMode,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Sweeps between prior updates in [`EtaMode::Auto`].
    pub eta_cadence: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { num_topics: 5, alpha: 50.0, eta: EtaMode::Auto, iterations: 2000, burn_in: 500, seed: 0, eta_cadence: 10 }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), LdaError> {
        let bad = |m: &str| Err(LdaError::InvalidConfig(m.to_string()));
        if self.num_topics == 0 || self.num_topics > u16::MAX as usize {
            return bad("num_topics must be in 1..=65535");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if let EtaMode::Symmetric(e) = self.eta {
            if !(e.is_finite() && e > 0.0) {
                return bad("symmetric eta must be positive");
            }
        }
        if self.iterations <= self.burn_in {
            return bad("iterations must exceed burn_in");
        }
        if self.eta_cadence == 0 {
            return bad("eta_cadence must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCounts {
    /// K×V averaged topic-word counts.
    pub n_kw: Vec<Vec<f64>>,
    /// D×K averaged document-topic counts.
    pub n_dk: Vec<Vec<f64>>,
}

/// Trained LDA state. Counts are posterior means over the post-burn-in sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub subset_id: SubsetId,
    pub config: LdaConfig,
    pub vocabulary: Vec<String>,
    pub vocabulary_hash: String,
    pub doc_keys: Vec<DocumentKey>,
    pub doc_lengths: Vec<usize>,
    /// K×V topic-word probabilities.
    pub phi: Vec<Vec<f64>>,
    /// D×K document-topic probabilities.
    pub theta: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    /// Averaged tokens per topic.
    pub topic_mass: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<TopicCounts>,
}

pub fn vocabulary_hash(vocab: &[String]) -> String {
    let mut h = Sha256::new();
    for w in vocab {
        h.update(w.as_bytes());
        h.update([0u8]);
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn normalize_rows<'a>(rows: impl Iterator<Item = Vec<f64>> + 'a) -> Vec<Vec<f64>> {
    rows.map(|row| {
        let total: f64 = row.iter().sum();
        row.into_iter().map(|x| x / total).collect()
    })
    .collect()
}

/// `phi[k][w] = (n_kw + eta_w) / (n_k + sum eta)`.
pub fn phi_from_counts(n_kw: &[Vec<f64>], eta: &[f64]) -> Vec<Vec<f64>> {
    normalize_rows(n_kw.iter().map(|row| row.iter().zip(eta).map(|(c, e)| c + e).collect()))
}

/// `theta[d][k] = (n_dk + alpha) / (N_d + K alpha)`.
pub fn theta_from_counts(n_dk: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    normalize_rows(n_dk.iter().map(|row| row.iter().map(|c| c + alpha).collect()))
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_topics(&self, key: &DocumentKey) -> Result<&[f64], LdaError> {
        self.doc_keys.iter().position(|k| k == key).map(|d| self.theta[d].as_slice()).ok_or_else(|| LdaError::UnknownKey(key.clone()))
    }

    /// Topic marginal `p(k)` from token mass.
    pub fn topic_marginal(&self) -> Vec<f64> {
        let total: f64 = self.topic_mass.iter().sum();
        if total > 0.0 {
            self.topic_mass.iter().map(|m| m / total).collect()
        } else {
            vec![1.0 / self.num_topics() as f64; self.num_topics()]
        }
    }

    /// Drops the count matrices (for compact export).
    pub fn without_counts(mut self) -> Self {
        self.counts = None;
        self
    }
}

/// Trains one model on a sub-corpus.
pub fn train(subcorpus: &SubCorpus, config: &LdaConfig) -> Result<TopicModel, LdaError> {
    config.validate()?;
    if subcorpus.num_docs() == 0 || subcorpus.vocab_size() == 0 {
        return Err(LdaError::EmptyCorpus);
    }
    if let Some(d) = subcorpus.streams.iter().position(Vec::is_empty) {
        return Err(LdaError::EmptyDocument(subcorpus.doc_keys[d].clone()));
    }
    let k = config.num_topics;
    let v = subcorpus.vocab_size();
    let initial_eta = match config.eta {
        EtaMode::Symmetric(e) => e,
        EtaMode::Auto => 1.0 / k as f64,
    };
    let streams: Vec<u64> = subcorpus.doc_keys.iter().map(|key| label_hash(&key.to_string())).collect();
    let mut sampler = GibbsSampler::new(&subcorpus.streams, v, k, config.alpha, vec![initial_eta; v], config.seed, streams);
    let mut acc = CountAccumulator::new(subcorpus.num_docs(), k, v);
    let eta_start = config.burn_in / 4;

    for sweep in 1..=config.iterations {
        sampler.sweep();
        if config.eta == EtaMode::Auto && sweep > eta_start && (sweep - eta_start).is_multiple_of(config.eta_cadence) {
            match estimate_eta(&sampler.topic_word_rows(), sampler.eta()) {
                Ok(eta) => sampler.set_eta(eta),
                Err(e) => log::warn!("{}: sweep {sweep}: {e}; keeping previous eta", subcorpus.subset_id),
            }
        }
        if sweep > config.burn_in {
            acc.add(&sampler);
        }
    }

    let acc = acc.mean();
    let eta = sampler.eta().to_vec();
    Ok(TopicModel {
        subset_id: subcorpus.subset_id,
        config: config.clone(),
        vocabulary: subcorpus.vocabulary.clone(),
        vocabulary_hash: vocabulary_hash(&subcorpus.vocabulary),
        doc_keys: subcorpus.doc_keys.clone(),
        doc_lengths: subcorpus.streams.iter().map(Vec::len).collect(),
        phi: phi_from_counts(&acc.n_kw, &eta),
        theta: theta_from_counts(&acc.n_dk, config.alpha),
        eta,
        topic_mass: acc.n_k,
        counts: Some(TopicCounts { n_kw: acc.n_kw, n_dk: acc.n_dk }),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{CountryCode, Dimension, Section};

    pub(crate) fn toy_corpus() -> SubCorpus {
        let countries = ["AT", "BE", "CY", "DK", "EE", "FI"];
        let streams = vec![vec![0, 1, 0, 1, 2, 0], vec![3, 4, 3, 4, 5], vec![0, 0, 1, 2, 2], vec![3, 5, 5, 4], vec![0, 1, 3, 4], vec![2, 1, 0, 5, 4, 3]];
        SubCorpus {
            subset_id: SubsetId::Decarbonisation,
            vocabulary: ["bus", "car", "rail", "solar", "wind", "biomass"].iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            doc_keys: countries
                .iter()
                .map(|c| DocumentKey::new(CountryCode::new(c).unwrap(), Dimension::Decarbonisation, Section::Objectives).unwrap())
                .collect(),
            streams,
        }
    }

    pub(crate) fn sorted_vocab(mut sc: SubCorpus) -> SubCorpus {
        // vocabulary order is irrelevant to training; keep it sorted for word_id lookups
        let mut idx: Vec<usize> = (0..sc.vocabulary.len()).collect();
        idx.sort_by(|&a, &b| sc.vocabulary[a].cmp(&sc.vocabulary[b]));
        let remap: Vec<u32> = {
            let mut r = vec![0; idx.len()];
            for (new, &old) in idx.iter().enumerate() {
                r[old] = new as u32;
            }
            r
        };
        sc.vocabulary = idx.iter().map(|&i| sc.vocabulary[i].clone()).collect();
        for s in &mut sc.streams {
            for t in s.iter_mut() {
                *t = remap[*t as usize];
            }
        }
        sc
    }

    fn quick(k: usize, eta: EtaMode) -> LdaConfig {
        LdaConfig { num_topics: k, alpha: 0.5, eta, iterations: 200, burn_in: 50, seed: 3, eta_cadence: 10 }
    }

    #[test]
    fn simplex_rows_and_recomputability() {
        let sc = sorted_vocab(toy_corpus());
        for eta in [EtaMode::Symmetric(0.05), EtaMode::Auto] {
            let m = train(&sc, &quick(2, eta)).unwrap();
            for row in m.phi.iter().chain(&m.theta) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&x| x > 0.0));
            }
            let counts = m.counts.as_ref().unwrap();
            let phi = phi_from_counts(&counts.n_kw, &m.eta);
            let theta = theta_from_counts(&counts.n_dk, m.config.alpha);
            for (a, b) in phi.iter().flatten().zip(m.phi.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in theta.iter().flatten().zip(m.theta.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
            // direct formula with n_k + sum(eta) in the denominator
            let eta_sum: f64 = m.eta.iter().sum();
            for t in 0..2 {
                for w in 0..sc.vocab_size() {
                    let direct = (counts.n_kw[t][w] + m.eta[w]) / (m.topic_mass[t] + eta_sum);
                    assert!((direct - m.phi[t][w]).abs() < 1e-12);
                }
            }
            for d in 0..sc.num_docs() {
                let direct = (counts.n_dk[d][0] + 0.5) / (m.doc_lengths[d] as f64 + 2.0 * 0.5);
                assert!((direct - m.theta[d][0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let sc = sorted_vocab(toy_corpus());
        let a = train(&sc, &quick(3, EtaMode::Auto)).unwrap();
        let b = train(&sc, &quick(3, EtaMode::Auto)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let mut other = quick(3, EtaMode::Auto);
        other.seed = 4;
        assert_ne!(train(&sc, &other).unwrap().theta, a.theta);
    }

    #[test]
    fn permuting_documents_permutes_theta() {
        let sc = sorted_vocab(toy_corpus());
        let mut perm = sc.clone();
        perm.doc_keys.reverse();
        perm.streams.reverse();
        let a = train(&sc, &quick(2, EtaMode::Symmetric(0.1))).unwrap();
        let b = train(&perm, &quick(2, EtaMode::Symmetric(0.1))).unwrap();
        let n = sc.num_docs();
        for d in 0..n {
            assert_eq!(a.theta[d], b.theta[n - 1 - d]);
        }
        assert_eq!(a.phi, b.phi);
    }

    #[test]
    fn single_topic_degenerates() {
        let sc = sorted_vocab(toy_corpus());
        let m = train(&sc, &quick(1, EtaMode::Symmetric(0.1))).unwrap();
        assert!(m.theta.iter().all(|r| r == &vec![1.0]));
        let mut freq = vec![0.0; sc.vocab_size()];
        for s in &sc.streams {
            for &t in s {
                freq[t as usize] += 1.0;
            }
        }
        let total: f64 = freq.iter().sum::<f64>() + 0.1 * sc.vocab_size() as f64;
        for (w, f) in freq.iter().enumerate() {
            assert!((m.phi[0][w] - (f + 0.1) / total).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let mut sc = sorted_vocab(toy_corpus());
        let mut cfg = quick(2, EtaMode::Auto);
        cfg.burn_in = cfg.iterations;
        assert!(matches!(train(&sc, &cfg), Err(LdaError::InvalidConfig(_))));
        let mut cfg = quick(2, EtaMode::Auto);
        cfg.alpha = 0.0;
        assert!(matches!(train(&sc, &cfg), Err(LdaError::InvalidConfig(_))));
        sc.streams[2].clear();
        match train(&sc, &quick(2, EtaMode::Auto)) {
            Err(LdaError::EmptyDocument(k)) => assert_eq!(k.country.as_str(), "CY"),
            other => panic!("{other:?}"),
        }
        let m = train(&sorted_vocab(toy_corpus()), &quick(2, EtaMode::Auto)).unwrap();
        let missing = DocumentKey::new(CountryCode::new("ZZ").unwrap(), Dimension::Decarbonisation, Section::Objectives).unwrap();
        assert!(matches!(m.doc_topics(&missing), Err(LdaError::UnknownKey(_))));
        let present = m.doc_keys[0].clone();
        assert!((m.doc_topics(&present).unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
