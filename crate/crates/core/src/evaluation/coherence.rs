use std::collections::HashSet;

use super::{CoherenceMetric, CoherenceReport, EvalError};
use crate::corpus::SubCorpus;

pub const DEFAULT_WINDOW: usize = 110;
pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_EPSILON: f64 = 1e-12;

fn resolve(topic: &[String], sc: &SubCorpus, top_n: usize) -> Result<Vec<u32>, EvalError> {
    let mut seen = HashSet::new();
    topic
        .iter()
        .take(top_n)
        .map(|w| {
            if !seen.insert(w.as_str()) {
                return Err(EvalError::DuplicateWord(w.clone()));
            }
            sc.word_id(w).ok_or_else(|| EvalError::WordNotInCorpus(w.clone()))
        })
        .collect()
}

fn report(metric: CoherenceMetric, per_topic: Vec<f64>, top_n: usize, window: Option<usize>) -> CoherenceReport {
    let aggregate = if per_topic.is_empty() { 0.0 } else { per_topic.iter().sum::<f64>() / per_topic.len() as f64 };
    CoherenceReport { metric, per_topic, aggregate, top_n, window }
}

/// Document-occurrence sets for a list of word ids.
fn doc_sets(sc: &SubCorpus, ids: &[u32]) -> Vec<Vec<bool>> {
    let mut sets = vec![vec![false; sc.num_docs()]; ids.len()];
    for (d, stream) in sc.streams.iter().enumerate() {
        let present: HashSet<u32> = stream.iter().copied().collect();
        for (i, id) in ids.iter().enumerate() {
            sets[i][d] = present.contains(id);
        }
    }
    sets
}

/// UMass coherence: `sum_{m>=2} sum_{l<m} log((D(v_m, v_l) + 1) / D(v_l))`
/// over rank-ordered topic words, with `D` document (co-)occurrence counts.
pub fn coherence_umass(topics: &[Vec<String>], sc: &SubCorpus, top_n: usize) -> Result<CoherenceReport, EvalError> {
    let mut per_topic = Vec::with_capacity(topics.len());
    for topic in topics {
        let ids = resolve(topic, sc, top_n)?;
        let sets = doc_sets(sc, &ids);
        let df: Vec<usize> = sets.iter().map(|s| s.iter().filter(|&&b| b).count()).collect();
        if let Some(i) = df.iter().position(|&c| c == 0) {
            return Err(EvalError::WordNotInCorpus(topic[i].clone()));
        }
        let mut score = 0.0;
        for m in 1..ids.len() {
            for l in 0..m {
                let co = sets[m].iter().zip(&sets[l]).filter(|(a, b)| **a && **b).count();
                score += ((co as f64 + 1.0) / df[l] as f64).ln();
            }
        }
        per_topic.push(score);
    }
    Ok(report(CoherenceMetric::Umass, per_topic, top_n, None))
}

/// Boolean sliding-window occurrence counts for a set of word ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCounts {
    pub windows: usize,
    pub single: Vec<usize>,
    /// Symmetric; the diagonal equals `single`.
    pub pair: Vec<Vec<usize>>,
}

impl WindowCounts {
    pub fn p(&self, i: usize) -> f64 {
        self.single[i] as f64 / self.windows as f64
    }

    pub fn p_joint(&self, i: usize, j: usize) -> f64 {
        self.pair[i][j] as f64 / self.windows as f64
    }
}

/// Documents no longer than `window` count as one window; longer ones
/// contribute `len - window + 1` windows.
pub fn window_counts(sc: &SubCorpus, ids: &[u32], window: usize) -> WindowCounts {
    let n = ids.len();
    let slot = |t: u32| ids.iter().position(|&x| x == t);
    let mut out = WindowCounts { windows: 0, single: vec![0; n], pair: vec![vec![0; n]; n] };
    let window = window.max(1);
    for stream in &sc.streams {
        let slots: Vec<Option<usize>> = stream.iter().map(|&t| slot(t)).collect();
        let mut live = vec![0usize; n];
        let tally = |live: &[usize], out: &mut WindowCounts| {
            out.windows += 1;
            let present: Vec<usize> = (0..n).filter(|&i| live[i] > 0).collect();
            for (a, &i) in present.iter().enumerate() {
                out.single[i] += 1;
                for &j in &present[a..] {
                    out.pair[i][j] += 1;
                    if i != j {
                        out.pair[j][i] += 1;
                    }
                }
            }
        };
        if slots.len() <= window {
            for s in slots.iter().flatten() {
                live[*s] += 1;
            }
            tally(&live, &mut out);
            continue;
        }
        for s in slots[..window].iter().flatten() {
            live[*s] += 1;
        }
        tally(&live, &mut out);
        for end in window..slots.len() {
            if let Some(s) = slots[end - window] {
                live[s] -= 1;
            }
            if let Some(s) = slots[end] {
                live[s] += 1;
            }
            tally(&live, &mut out);
        }
    }
    out
}

/// Normalized pointwise mutual information from window counts.
pub fn npmi(counts: &WindowCounts, i: usize, j: usize, epsilon: f64) -> f64 {
    let pij = counts.p_joint(i, j) + epsilon;
    let denom = -pij.ln();
    if denom <= 0.0 {
        // both words in every window
        return 1.0;
    }
    (pij / (counts.p(i) * counts.p(j))).ln() / denom
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// C_V coherence: NPMI context vectors over boolean sliding windows, one-set
/// segmentation, cosine similarity, arithmetic mean.
pub fn coherence_cv(topics: &[Vec<String>], sc: &SubCorpus, window: usize, top_n: usize, epsilon: f64) -> Result<CoherenceReport, EvalError> {
    let mut per_topic = Vec::with_capacity(topics.len());
    for topic in topics {
        let ids = resolve(topic, sc, top_n)?;
        let counts = window_counts(sc, &ids, window);
        if let Some(i) = counts.single.iter().position(|&c| c == 0) {
            return Err(EvalError::WordNotInCorpus(topic[i].clone()));
        }
        let n = ids.len();
        let vectors: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| npmi(&counts, i, j, epsilon)).collect()).collect();
        let total: Vec<f64> = (0..n).map(|j| vectors.iter().map(|v| v[j]).sum()).collect();
        let score = if n == 0 { 0.0 } else { vectors.iter().map(|v| cosine(v, &total)).sum::<f64>() / n as f64 };
        per_topic.push(score);
    }
    Ok(report(CoherenceMetric::Cv, per_topic, top_n, Some(window)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CountryCode, Dimension, DocumentKey, Section, SubsetId};
    use rand::{Rng, SeedableRng};

    pub(crate) fn corpus(vocab: &[&str], docs: &[&[u32]]) -> SubCorpus {
        let codes = ["AA", "BB", "CC", "DD", "EE", "FF", "GG", "HH", "II", "JJ", "KK", "LL"];
        SubCorpus {
            subset_id: SubsetId::Overview,
            vocabulary: vocab.iter().map(|s| s.to_string()).collect(),
            doc_keys: (0..docs.len()).map(|i| DocumentKey::new(CountryCode::new(codes[i]).unwrap(), Dimension::None, Section::Overview).unwrap()).collect(),
            streams: docs.iter().map(|d| d.to_vec()).collect(),
        }
    }

    fn w(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn umass_hand_corpus() {
        // {a b}, {a c}, {a b c}
        let sc = corpus(&["a", "b", "c"], &[&[0, 1], &[0, 2], &[0, 1, 2]]);
        let r = coherence_umass(&[w(&["a", "b"])], &sc, 10).unwrap();
        assert_eq!(r.per_topic, vec![0.0]);
        assert_eq!(r.aggregate, 0.0);
        // (b, c): D(c, b) = 1, D(b) = 2
        let r = coherence_umass(&[w(&["b", "c"])], &sc, 10).unwrap();
        assert!((r.per_topic[0] - (2.0f64 / 2.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn umass_never_cooccurring_pair() {
        let sc = corpus(&["x", "y"], &[&[0], &[0], &[0], &[0], &[1]]);
        let r = coherence_umass(&[w(&["x", "y"])], &sc, 10).unwrap();
        assert!((r.per_topic[0] - (0.25f64).ln()).abs() < 1e-15);
        assert!(r.per_topic[0] < 0.0);
    }

    #[test]
    fn umass_is_order_dependent() {
        let sc = corpus(&["a", "b", "c"], &[&[0, 1], &[0, 2], &[0, 1, 2], &[0]]);
        let ab = coherence_umass(&[w(&["a", "b"])], &sc, 10).unwrap().aggregate;
        let ba = coherence_umass(&[w(&["b", "a"])], &sc, 10).unwrap().aggregate;
        assert!((ab - ba).abs() > 1e-6);
    }

    #[test]
    fn word_errors() {
        let sc = corpus(&["a", "b"], &[&[0, 1]]);
        assert!(matches!(coherence_umass(&[w(&["a", "zz"])], &sc, 10), Err(EvalError::WordNotInCorpus(_))));
        assert!(matches!(coherence_umass(&[w(&["a", "a"])], &sc, 10), Err(EvalError::DuplicateWord(_))));
        assert!(matches!(coherence_cv(&[w(&["zz"])], &sc, 110, 10, 1e-12), Err(EvalError::WordNotInCorpus(_))));
    }

    #[test]
    fn cv_perfect_association() {
        // a and b always together, never apart
        let sc = corpus(&["a", "b", "c", "d"], &[&[0, 1, 2], &[0, 1], &[2, 3], &[3], &[0, 1, 3]]);
        let counts = window_counts(&sc, &[0, 1], 110);
        assert!((npmi(&counts, 0, 1, 1e-12) - 1.0).abs() < 1e-9);
        let r = coherence_cv(&[w(&["a", "b"])], &sc, 110, 10, 1e-12).unwrap();
        assert!((r.per_topic[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn short_documents_count_as_whole_windows() {
        let sc = corpus(&["a", "b", "c"], &[&[0, 1, 0, 2], &[2, 2], &[1, 0], &[1]]);
        let ids = [0, 1, 2];
        let c = window_counts(&sc, &ids, 110);
        // whole-document counting
        let docs_with = |t: u32| sc.streams.iter().filter(|s| s.contains(&t)).count();
        let docs_with_both = |a: u32, b: u32| sc.streams.iter().filter(|s| s.contains(&a) && s.contains(&b)).count();
        assert_eq!(c.windows, 4);
        for (i, &a) in ids.iter().enumerate() {
            assert_eq!(c.single[i], docs_with(a));
            for (j, &b) in ids.iter().enumerate() {
                assert_eq!(c.pair[i][j], docs_with_both(a, b));
            }
        }
    }

    #[test]
    fn sliding_windows_match_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let docs: Vec<Vec<u32>> = (0..5).map(|_| (0..rng.random_range(1..40)).map(|_| rng.random_range(0..6)).collect()).collect();
        let refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
        let sc = corpus(&["a", "b", "c", "d", "e", "f"], &refs);
        let ids = [0, 2, 5];
        for window in [1, 3, 7, 50] {
            let c = window_counts(&sc, &ids, window);
            let mut windows = 0;
            let mut pair = vec![vec![0; 3]; 3];
            for d in &docs {
                let spans: Vec<&[u32]> = if d.len() <= window { vec![d] } else { d.windows(window).collect() };
                for s in spans {
                    windows += 1;
                    for i in 0..3 {
                        for j in 0..3 {
                            if s.contains(&ids[i]) && s.contains(&ids[j]) {
                                pair[i][j] += 1;
                            }
                        }
                    }
                }
            }
            assert_eq!(c.windows, windows);
            assert_eq!(c.pair, pair);
        }
    }

    #[test]
    fn independent_words_have_near_zero_npmi() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        // single-token windows would be degenerate; use 4-token docs, each slot drawn independently
        let docs: Vec<Vec<u32>> = (0..20_000)
            .map(|_| {
                let mut d = vec![2, 2];
                if rng.random::<f64>() < 0.3 {
                    d.push(0);
                }
                if rng.random::<f64>() < 0.4 {
                    d.push(1);
                }
                d
            })
            .collect();
        let refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
        let mut sc = corpus(&["a", "b", "c"], &refs[..1]);
        sc.streams = docs.clone();
        sc.doc_keys = vec![sc.doc_keys[0].clone(); docs.len()];
        let c = window_counts(&sc, &[0, 1], 110);
        assert!(npmi(&c, 0, 1, 1e-12).abs() < 0.02, "{}", npmi(&c, 0, 1, 1e-12));
    }

    #[test]
    fn cv_permutation_invariant_and_bounded() {
        let sc = corpus(&["a", "b", "c", "d"], &[&[0, 1, 2], &[0, 3], &[2, 3, 1], &[1], &[0, 1, 3, 2, 2]]);
        let a = coherence_cv(&[w(&["a", "b", "c", "d"])], &sc, 2, 10, 1e-12).unwrap();
        let b = coherence_cv(&[w(&["d", "b", "a", "c"])], &sc, 2, 10, 1e-12).unwrap();
        assert!((a.aggregate - b.aggregate).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&a.aggregate));
        // reordering documents changes nothing
        let mut perm = sc.clone();
        perm.streams.reverse();
        perm.doc_keys.reverse();
        let c = coherence_cv(&[w(&["a", "b", "c", "d"])], &perm, 2, 10, 1e-12).unwrap();
        assert!((a.aggregate - c.aggregate).abs() < 1e-12);
        let u1 = coherence_umass(&[w(&["a", "b", "c"])], &sc, 10).unwrap();
        let u2 = coherence_umass(&[w(&["a", "b", "c"])], &perm, 10).unwrap();
        assert_eq!(u1, u2);
    }
}
