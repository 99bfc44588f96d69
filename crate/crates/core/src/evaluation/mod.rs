//! Topic coherence (UMass, C_V) and (K, alpha) grid search.

mod coherence;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SubCorpus;
use crate::interpret::top_words;
use crate::lda::{train, LdaConfig, LdaError, TopicModel};

pub use coherence::{coherence_cv, coherence_umass, npmi, window_counts, WindowCounts, DEFAULT_EPSILON, DEFAULT_TOP_N, DEFAULT_WINDOW};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("word {0:?} not in corpus")]
    WordNotInCorpus(String),
    #[error("duplicate topic word {0:?}")]
    DuplicateWord(String),
    #[error("empty grid")]
    EmptyGrid,
    #[error("grid cell K={k} alpha={alpha} seed={seed}: {source}")]
    Training {
        k: usize,
        alpha: f64,
        seed: u64,
        #[source]
        source: LdaError,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceMetric {
    Umass,
    #[default]
    Cv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub metric: CoherenceMetric,
    pub per_topic: Vec<f64>,
    pub aggregate: f64,
    pub top_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

/// Coherence settings shared by both metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    pub metric: CoherenceMetric,
    pub top_n: usize,
    pub window: usize,
    pub epsilon: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig { metric: CoherenceMetric::Cv, top_n: DEFAULT_TOP_N, window: DEFAULT_WINDOW, epsilon: DEFAULT_EPSILON }
    }
}

/// Both metrics over the top words of every topic.
pub fn score_model(model: &TopicModel, sc: &SubCorpus, cfg: &CoherenceConfig) -> Result<(CoherenceReport, CoherenceReport), EvalError> {
    let topics: Vec<Vec<String>> = (0..model.num_topics()).map(|k| top_words(model, k, cfg.top_n).expect("topic in range")).collect();
    let umass = coherence_umass(&topics, sc, cfg.top_n)?;
    let cv = coherence_cv(&topics, sc, cfg.window, cfg.top_n, cfg.epsilon)?;
    Ok((umass, cv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub umass: CoherenceReport,
    pub cv: CoherenceReport,
}

impl GridEntry {
    pub fn score(&self, metric: CoherenceMetric) -> f64 {
        match metric {
            CoherenceMetric::Umass => self.umass.aggregate,
            CoherenceMetric::Cv => self.cv.aggregate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub metric: CoherenceMetric,
    pub entries: Vec<GridEntry>,
    /// Entry indices, best first.
    pub ranking: Vec<usize>,
}

impl GridSearchResult {
    /// `K,alpha,seed,umass,cv` rows in entry order.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["K", "alpha", "seed", "umass", "cv"])?;
        for e in &self.entries {
            w.write_record([e.k.to_string(), e.alpha.to_string(), e.seed.to_string(), e.umass.aggregate.to_string(), e.cv.aggregate.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Descending by score; NaN last; ties keep entry order.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| match (scores[a].is_nan(), scores[b].is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => scores[b].partial_cmp(&scores[a]).unwrap(),
    });
    idx
}

/// Trains and scores one model per `(K, alpha, seed)` cell. Cells run in
/// parallel; entries are in `K`-major, then `alpha`, then seed order.
pub fn grid_search(
    sc: &SubCorpus,
    base: &LdaConfig,
    k_grid: &[usize],
    alpha_grid: &[f64],
    seeds: &[u64],
    coherence: &CoherenceConfig,
) -> Result<GridSearchResult, EvalError> {
    if k_grid.is_empty() || alpha_grid.is_empty() || seeds.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let cells: Vec<(usize, f64, u64)> = k_grid.iter().flat_map(|&k| alpha_grid.iter().flat_map(move |&a| seeds.iter().map(move |&s| (k, a, s)))).collect();
    let entries = cells
        .par_iter()
        .map(|&(k, alpha, seed)| {
            let cfg = LdaConfig { num_topics: k, alpha, seed, ..base.clone() };
            let model = train(sc, &cfg).map_err(|source| EvalError::Training { k, alpha, seed, source })?;
            let (umass, cv) = score_model(&model, sc, coherence)?;
            log::info!("{} K={k} alpha={alpha} seed={seed}: umass={:.4} cv={:.4}", sc.subset_id, umass.aggregate, cv.aggregate);
            Ok(GridEntry { k, alpha, seed, umass, cv })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let scores: Vec<f64> = entries.iter().map(|e| e.score(coherence.metric)).collect();
    Ok(GridSearchResult { metric: coherence.metric, ranking: rank(&scores), entries })
}
