//! Exact t-SNE over a precomputed divergence matrix.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisError, SimilarityMatrix};
use crate::rng::{label_hash, stream_rng};

pub const ENTROPY_TOLERANCE: f64 = 1e-5;
const INIT_SIGMA: f64 = 1e-4;
const P_FLOOR: f64 = 1e-12;
const MAX_BISECTION: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("perplexity {perplexity} too high for {n} points")]
    PerplexityTooHigh { perplexity: f64, n: usize },
    #[error("t-SNE needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid t-SNE config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Input(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exaggeration {
    pub factor: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: Exaggeration,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig { perplexity: 8.0, iterations: 1000, learning_rate: 100.0, early_exaggeration: Exaggeration { factor: 12.0, iterations: 250 }, seed: 0 }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<(), EmbeddingError> {
        if n < 4 {
            return Err(EmbeddingError::TooFewPoints(n));
        }
        if self.iterations < 250 {
            return Err(EmbeddingError::InvalidConfig(format!("iterations must be at least 250, got {}", self.iterations)));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration.factor >= 1.0) {
            return Err(EmbeddingError::InvalidConfig("learning rate must be positive and exaggeration at least 1".into()));
        }
        if !(self.perplexity >= 1.0) || self.perplexity >= (n - 1) as f64 {
            return Err(EmbeddingError::PerplexityTooHigh { perplexity: self.perplexity, n });
        }
        Ok(())
    }

    /// Lowers the perplexity to `max(1, (n - 1) / 3)` when it is too high for `n`.
    pub fn clamped(mut self, n: usize) -> Self {
        let cap = ((n.saturating_sub(1)) as f64 / 3.0).max(1.0);
        if self.perplexity >= n.saturating_sub(1) as f64 {
            self.perplexity = cap;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub labels: Vec<String>,
    pub coordinates: Vec<[f64; 2]>,
    pub final_kl: f64,
    pub config: TsneConfig,
}

/// Row-conditional affinities `p(j|i)` with the per-row precision and
/// resulting Shannon entropy (nats).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinities {
    pub p: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub entropy: Vec<f64>,
}

fn row_affinities(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = d.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (d[j] - min)).exp() };
        z += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= z;
        if *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h
}

/// Bisects each row's precision so the entropy is `ln(perplexity)`.
/// Entries of `d` act as squared distances.
pub fn conditional_affinities(d: &[Vec<f64>], perplexity: f64) -> ConditionalAffinities {
    let n = d.len();
    let target = perplexity.ln();
    let mut out = ConditionalAffinities { p: vec![vec![0.0; n]; n], beta: vec![1.0; n], entropy: vec![0.0; n] };
    for i in 0..n {
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = row_affinities(&d[i], i, beta, &mut out.p[i]);
        for _ in 0..MAX_BISECTION {
            if (h - target).abs() < ENTROPY_TOLERANCE {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = row_affinities(&d[i], i, beta, &mut out.p[i]);
        }
        if (h - target).abs() >= ENTROPY_TOLERANCE {
            log::warn!("t-SNE row {i}: entropy {h} did not reach target {target}");
        }
        out.beta[i] = beta;
        out.entropy[i] = h;
    }
    out
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mean = [y.iter().map(|p| p[0]).sum::<f64>() / n, y.iter().map(|p| p[1]).sum::<f64>() / n];
    for p in y.iter_mut() {
        p[0] -= mean[0];
        p[1] -= mean[1];
    }
}

/// Embeds the points of `m`. Returns the layout and the KL divergence after
/// every iteration (against the unexaggerated affinities).
pub fn tsne_with_trace(m: &SimilarityMatrix, config: &TsneConfig) -> Result<(Embedding2D, Vec<f64>), EmbeddingError> {
    let n = m.len();
    config.validate(n)?;
    let mut rng = stream_rng(config.seed, label_hash("tsne"), 0);
    let normal = Normal::new(0.0, INIT_SIGMA).expect("valid sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    center(&mut y);

    if m.d.iter().flatten().all(|&x| x == 0.0) {
        log::warn!("t-SNE input has identical points; returning the seeded initial layout");
        return Ok((Embedding2D { labels: m.labels.clone(), coordinates: y, final_kl: 0.0, config: *config }, vec![]));
    }

    let cond = conditional_affinities(&m.d, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond.p[i][j] + cond.p[j][i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }

    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut q = vec![0.0; n * n];
    let mut trace = Vec::with_capacity(config.iterations);
    let mut current = f64::INFINITY;
    let mut scale = 1.0f64;
    for iter in 0..config.iterations {
        let exaggerating = iter < config.early_exaggeration.iterations;
        let ex = if exaggerating { config.early_exaggeration.factor } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };

        student_t(&y, &mut num, &mut q);
        let mut proposal = y.clone();
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mult = 4.0 * (ex * p[i * n + j] - q[i * n + j]) * num[i * n + j];
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                gains[i][c] = if (grad[c] > 0.0) != (update[i][c] > 0.0) { gains[i][c] + 0.2 } else { (gains[i][c] * 0.8).max(0.01) };
                update[i][c] = momentum * update[i][c] - scale * config.learning_rate * gains[i][c] * grad[c];
                proposal[i][c] += update[i][c];
            }
        }
        center(&mut proposal);
        let next = objective(&p, &proposal);
        // after exaggeration a step that raises the objective is rejected:
        // the velocity restarts and the step shrinks until descent resumes
        if exaggerating || next <= current {
            y = proposal;
            current = next;
            scale = (scale * 1.1).min(1.0);
        } else {
            update.iter_mut().for_each(|u| *u = [0.0; 2]);
            gains.iter_mut().for_each(|g| *g = [1.0; 2]);
            scale *= 0.5;
        }
        trace.push(current);
    }

    let final_kl = objective(&p, &y);
    Ok((Embedding2D { labels: m.labels.clone(), coordinates: y, final_kl, config: *config }, trace))
}

/// Fills the unnormalized kernel `num` and normalized `q`.
fn student_t(y: &[[f64; 2]], num: &mut [f64], q: &mut [f64]) {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            num[i * n + j] = if i == j { 0.0 } else { 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)) };
            z += num[i * n + j];
        }
    }
    for (k, (qk, v)) in q.iter_mut().zip(num.iter()).enumerate() {
        *qk = if k / n == k % n { 0.0 } else { (v / z).max(P_FLOOR) };
    }
}

fn objective(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (mut num, mut q) = (vec![0.0; n * n], vec![0.0; n * n]);
    student_t(y, &mut num, &mut q);
    kl(p, &q)
}

pub fn tsne(m: &SimilarityMatrix, config: &TsneConfig) -> Result<Embedding2D, EmbeddingError> {
    tsne_with_trace(m, config).map(|(e, _)| e)
}

/// Vector input: distances are pairwise information radius.
pub fn tsne_vectors(labels: Vec<String>, vectors: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding2D, EmbeddingError> {
    tsne(&SimilarityMatrix::from_vectors(labels, vectors)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("P{i:02}")).collect()
    }

    fn blob_matrix(n: usize, seed: u64) -> SimilarityMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|i| [(i % 3) as f64 * 3.0 + rng.random::<f64>(), rng.random::<f64>()]).collect();
        let d = (0..n).map(|i| (0..n).map(|j| (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).collect()).collect();
        SimilarityMatrix::new(labels(n), d).unwrap()
    }

    fn jsd_matrix(n: usize, seed: u64) -> SimilarityMatrix {
        // three loose groups of topic mixtures
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut v: Vec<f64> = (0..15).map(|_| rng.random::<f64>().powi(3)).collect();
                v[i % 3 * 5] += 2.0;
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect()
            })
            .collect();
        SimilarityMatrix::from_vectors(labels(n), &vectors).unwrap()
    }

    #[test]
    fn entropies_hit_target() {
        let m = blob_matrix(30, 1);
        for perp in [2.0, 5.0, 8.0] {
            let c = conditional_affinities(&m.d, perp);
            for (i, h) in c.entropy.iter().enumerate() {
                let direct: f64 = -c.p[i].iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>();
                assert!((direct - perp.ln()).abs() < 1e-5, "row {i}");
                assert!((h - direct).abs() < 1e-12);
                assert!((c.p[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(c.p[i][i], 0.0);
            }
        }
    }

    #[test]
    fn two_tight_pairs_stay_apart() {
        let d = vec![vec![0.0, 0.001, 0.5, 0.5], vec![0.001, 0.0, 0.5, 0.5], vec![0.5, 0.5, 0.0, 0.001], vec![0.5, 0.5, 0.001, 0.0]];
        let m = SimilarityMatrix::new(labels(4), d).unwrap();
        let cfg = TsneConfig { perplexity: 1.5, ..TsneConfig::default() };
        let e = tsne(&m, &cfg).unwrap();
        let dist = |a: usize, b: usize| ((e.coordinates[a][0] - e.coordinates[b][0]).powi(2) + (e.coordinates[a][1] - e.coordinates[b][1]).powi(2)).sqrt();
        let within = dist(0, 1).max(dist(2, 3));
        let between = dist(0, 2).min(dist(0, 3)).min(dist(1, 2)).min(dist(1, 3));
        assert!(within < between, "{within} vs {between}");
    }

    #[test]
    fn deterministic_centered_and_descending() {
        let m = jsd_matrix(27, 3);
        let cfg = TsneConfig { seed: 42, ..TsneConfig::default() };
        let (a, trace) = tsne_with_trace(&m, &cfg).unwrap();
        let b = tsne(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let c = tsne(&m, &TsneConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.coordinates, c.coordinates);
        for k in 0..2 {
            let mean: f64 = a.coordinates.iter().map(|p| p[k]).sum::<f64>() / 27.0;
            assert!(mean.abs() < 1e-9);
        }
        assert!(a.coordinates.iter().flatten().all(|x| x.is_finite()));
        for t in cfg.early_exaggeration.iterations..trace.len() - 50 {
            assert!(trace[t + 50] <= trace[t] + 1e-3, "window at {t}: {:?}", &trace[t..t + 51]);
        }
        assert_eq!(*trace.last().unwrap(), a.final_kl);
    }

    #[test]
    fn vector_and_matrix_paths_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let vectors: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            })
            .collect();
        let cfg = TsneConfig { perplexity: 2.0, iterations: 300, ..TsneConfig::default() };
        let m = SimilarityMatrix::from_vectors(labels(8), &vectors).unwrap();
        assert_eq!(tsne_vectors(labels(8), &vectors, &cfg).unwrap(), tsne(&m, &cfg).unwrap());
    }

    #[test]
    fn config_errors_and_degenerate_input() {
        let m = blob_matrix(6, 2);
        assert_eq!(tsne(&m, &TsneConfig::default()), Err(EmbeddingError::PerplexityTooHigh { perplexity: 8.0, n: 6 }));
        assert!(tsne(&m, &TsneConfig::default().clamped(6)).is_ok());
        assert!(matches!(tsne(&m, &TsneConfig { iterations: 100, perplexity: 2.0, ..TsneConfig::default() }), Err(EmbeddingError::InvalidConfig(_))));
        let small = SimilarityMatrix::new(labels(3), vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(tsne(&small, &TsneConfig::default()), Err(EmbeddingError::TooFewPoints(3)));

        let same = SimilarityMatrix::new(labels(5), vec![vec![0.0; 5]; 5]).unwrap();
        let e = tsne(&same, &TsneConfig { perplexity: 2.0, ..TsneConfig::default() }).unwrap();
        assert!(e.coordinates.iter().flatten().all(|x| x.abs() < 1e-2));
    }
}
