use rand::Rng;

use crate::rng::stream_rng;

/// Collapsed Gibbs sampler state.
///
/// Each document draws from its own stream keyed by `(seed, doc_stream, sweep)`
/// and documents are visited in ascending stream-id order, so the chain does
/// not depend on the order documents were supplied in.
#[derive(Debug, Clone)]
pub struct GibbsSampler<'a> {
    docs: &'a [Vec<u32>],
    doc_streams: Vec<u64>,
    visit_order: Vec<usize>,
    seed: u64,
    k: usize,
    v: usize,
    alpha: f64,
    eta: Vec<f64>,
    eta_sum: f64,
    z: Vec<Vec<u16>>,
    n_dk: Vec<Vec<u32>>,
    n_kw: Vec<u32>,
    n_k: Vec<u32>,
    sweeps: u64,
    weights: Vec<f64>,
}

impl<'a> GibbsSampler<'a> {
    /// Random initial assignment. `doc_streams` must be distinct.
    pub fn new(docs: &'a [Vec<u32>], vocab_size: usize, num_topics: usize, alpha: f64, eta: Vec<f64>, seed: u64, doc_streams: Vec<u64>) -> Self {
        assert_eq!(docs.len(), doc_streams.len());
        assert_eq!(eta.len(), vocab_size);
        assert!(num_topics >= 1 && num_topics <= u16::MAX as usize);
        let mut visit_order: Vec<usize> = (0..docs.len()).collect();
        visit_order.sort_by_key(|&d| (doc_streams[d], d));

        let k = num_topics;
        let mut s = GibbsSampler {
            docs,
            visit_order,
            seed,
            k,
            v: vocab_size,
            alpha,
            eta_sum: eta.iter().sum(),
            eta,
            z: Vec::with_capacity(docs.len()),
            n_dk: vec![vec![0; k]; docs.len()],
            n_kw: vec![0; k * vocab_size],
            n_k: vec![0; k],
            sweeps: 0,
            weights: vec![0.0; k],
            doc_streams,
        };
        for d in 0..docs.len() {
            let mut rng = stream_rng(s.seed, s.doc_streams[d], 0);
            let zs: Vec<u16> = docs[d].iter().map(|_| rng.random_range(0..k) as u16).collect();
            for (&w, &t) in docs[d].iter().zip(&zs) {
                s.n_dk[d][t as usize] += 1;
                s.n_kw[t as usize * s.v + w as usize] += 1;
                s.n_k[t as usize] += 1;
            }
            s.z.push(zs);
        }
        s
    }

    /// Resamples every token once.
    pub fn sweep(&mut self) {
        self.sweeps += 1;
        let order = std::mem::take(&mut self.visit_order);
        for &d in &order {
            let mut rng = stream_rng(self.seed, self.doc_streams[d], self.sweeps);
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i] as usize;
                let old = self.z[d][i] as usize;
                self.n_dk[d][old] -= 1;
                self.n_kw[old * self.v + w] -= 1;
                self.n_k[old] -= 1;

                let eta_w = self.eta[w];
                let mut total = 0.0;
                for t in 0..self.k {
                    let p = (self.n_dk[d][t] as f64 + self.alpha) * (self.n_kw[t * self.v + w] as f64 + eta_w) / (self.n_k[t] as f64 + self.eta_sum);
                    total += p;
                    self.weights[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(self.k - 1);

                self.z[d][i] = new as u16;
                self.n_dk[d][new] += 1;
                self.n_kw[new * self.v + w] += 1;
                self.n_k[new] += 1;
            }
        }
        self.visit_order = order;
    }

    pub fn set_eta(&mut self, eta: Vec<f64>) {
        assert_eq!(eta.len(), self.v);
        self.eta_sum = eta.iter().sum();
        self.eta = eta;
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn assignments(&self) -> &[Vec<u16>] {
        &self.z
    }

    pub fn doc_topic_counts(&self) -> &[Vec<u32>] {
        &self.n_dk
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.n_k
    }

    pub fn topic_word_count(&self, topic: usize, word: usize) -> u32 {
        self.n_kw[topic * self.v + word]
    }

    pub fn topic_word_rows(&self) -> Vec<Vec<f64>> {
        self.n_kw.chunks(self.v.max(1)).take(self.k).map(|r| r.iter().map(|&c| c as f64).collect()).collect()
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps
    }
}

/// Running sum of count states, for posterior averaging.
#[derive(Debug, Clone)]
pub(crate) struct CountAccumulator {
    pub n_dk: Vec<Vec<f64>>,
    pub n_kw: Vec<Vec<f64>>,
    pub n_k: Vec<f64>,
    pub samples: usize,
}

impl CountAccumulator {
    pub fn new(docs: usize, k: usize, v: usize) -> Self {
        CountAccumulator { n_dk: vec![vec![0.0; k]; docs], n_kw: vec![vec![0.0; v]; k], n_k: vec![0.0; k], samples: 0 }
    }

    pub fn add(&mut self, s: &GibbsSampler<'_>) {
        for (acc, row) in self.n_dk.iter_mut().zip(s.doc_topic_counts()) {
            for (a, &c) in acc.iter_mut().zip(row) {
                *a += c as f64;
            }
        }
        for (t, acc) in self.n_kw.iter_mut().enumerate() {
            for (w, a) in acc.iter_mut().enumerate() {
                *a += s.topic_word_count(t, w) as f64;
            }
        }
        for (a, &c) in self.n_k.iter_mut().zip(s.topic_totals()) {
            *a += c as f64;
        }
        self.samples += 1;
    }

    pub fn mean(mut self) -> Self {
        let n = self.samples.max(1) as f64;
        self.n_dk.iter_mut().flatten().for_each(|x| *x /= n);
        self.n_kw.iter_mut().flatten().for_each(|x| *x /= n);
        self.n_k.iter_mut().for_each(|x| *x /= n);
        self
    }
}
