//! Cross-country comparison of topic mixtures.

mod cluster;
mod correlation;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{CountryCode, Section, SubsetId};

pub use cluster::{cluster_hierarchical, cluster_kmeans, cooccurrence, cut, inertia, ClusterAssignment, ClusterMethod, CooccurrenceMatrix, Dendrogram, Merge};
pub use correlation::{correlation_matrix, spearman, CorrelationMatrix, Indicator, IndicatorRecord, IndicatorTable};

/// Tolerance on input simplex sums before internal renormalization.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not a probability vector (sum {0})")]
    NotNormalized(f64),
    #[error("{country} lacks section {section} in {subset}")]
    MissingSection { country: String, subset: SubsetId, section: Section },
    #[error("k = {k} exceeds the {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("threshold must be a non-negative number, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("need at least 3 complete pairs, got {0}")]
    TooFewPoints(usize),
    #[error("constant input has no rank correlation")]
    ZeroVariance,
    #[error("indicator table: {0}")]
    Indicators(String),
}

fn normalized(p: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let s: f64 = p.iter().sum();
    if !s.is_finite() || (s - 1.0).abs() > SIMPLEX_TOLERANCE || p.iter().any(|&x| x < 0.0) {
        return Err(AnalysisError::NotNormalized(s));
    }
    Ok(p.iter().map(|x| x / s).collect())
}

/// Jensen-Shannon divergence in nats, in `[0, ln 2]`.
pub fn information_radius(p: &[f64], q: &[f64]) -> Result<f64, AnalysisError> {
    if p.len() != q.len() {
        return Err(AnalysisError::LengthMismatch(p.len(), q.len()));
    }
    let (p, q) = (normalized(p)?, normalized(q)?);
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(&q) {
        let m = a + b;
        let term = |x: f64| if x > 0.0 { x * (2.0 * x / m).ln() } else { 0.0 };
        // summed per element so that swapping p and q is exact
        acc += term(a) + term(b);
    }
    Ok((0.5 * acc).clamp(0.0, LN_2))
}

/// Objectives-vs-policies divergence scaled by the topic count.
pub fn section_inconsistency(objectives: &[f64], policies: &[f64], k: usize) -> Result<f64, AnalysisError> {
    if objectives.len() != k {
        return Err(AnalysisError::LengthMismatch(objectives.len(), k));
    }
    Ok(information_radius(objectives, policies)? / k as f64)
}

/// What an agenda vector covers: one section, or all three sections bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Section(Section),
    Bound,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Section(s) => write!(f, "{s}"),
            Scope::Bound => f.write_str("bound"),
        }
    }
}

impl FromStr for Scope {
    type Err = crate::corpus::CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bound" {
            Ok(Scope::Bound)
        } else {
            s.parse().map(Scope::Section)
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgendaVector {
    pub country: CountryCode,
    pub subset_id: SubsetId,
    pub scope: Scope,
    pub values: Vec<f64>,
}

/// Concatenates the objectives, policies and current-situation vectors and
/// divides by three.
pub fn bind_distributions(country: &CountryCode, subset: SubsetId, theta_by_section: &BTreeMap<Section, Vec<f64>>) -> Result<AgendaVector, AnalysisError> {
    let mut values = Vec::new();
    let mut k = None;
    for section in Section::DIMENSIONED {
        let v = theta_by_section.get(&section).ok_or_else(|| AnalysisError::MissingSection { country: country.to_string(), subset, section })?;
        if let Some(k) = k {
            if v.len() != k {
                return Err(AnalysisError::LengthMismatch(v.len(), k));
            }
        }
        k = Some(v.len());
        values.extend(normalized(v)?.iter().map(|x| x / 3.0));
    }
    Ok(AgendaVector { country: country.clone(), subset_id: subset, scope: Scope::Bound, values })
}

/// Pairwise information radius between labeled vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub d: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// Checks shape, zero diagonal, symmetry and non-negative finite entries.
    pub fn new(labels: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let n = labels.len();
        if d.len() != n || d.iter().any(|r| r.len() != n) {
            return Err(AnalysisError::InvalidMatrix(format!("expected {n}x{n}")));
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(AnalysisError::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let x = d[i][j];
                if !x.is_finite() || x < 0.0 || x != d[j][i] {
                    return Err(AnalysisError::InvalidMatrix(format!("entry ({i}, {j}) = {x}")));
                }
            }
        }
        Ok(SimilarityMatrix { labels, d })
    }

    pub fn from_vectors(labels: Vec<String>, vectors: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        if labels.len() != vectors.len() {
            return Err(AnalysisError::LengthMismatch(labels.len(), vectors.len()));
        }
        let n = vectors.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| information_radius(&vectors[i], &vectors[j])).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for (off, &x) in upper[i].iter().enumerate() {
                d[i][i + 1 + off] = x;
                d[i + 1 + off][i] = x;
            }
        }
        Ok(SimilarityMatrix { labels, d })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyRow {
    pub country: CountryCode,
    pub subset_id: SubsetId,
    pub value: f64,
    pub above_mean: bool,
}

/// Per-country, per-dimension section inconsistency with per-dimension means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyTable {
    pub rows: Vec<InconsistencyRow>,
    pub means: BTreeMap<SubsetId, f64>,
}

impl InconsistencyTable {
    /// `values`: `(country, subset, inconsistency)` in any order.
    pub fn new(values: Vec<(CountryCode, SubsetId, f64)>) -> Self {
        let mut sums: BTreeMap<SubsetId, (f64, usize)> = BTreeMap::new();
        for (_, s, v) in &values {
            let e = sums.entry(*s).or_default();
            e.0 += v;
            e.1 += 1;
        }
        let means: BTreeMap<SubsetId, f64> = sums.into_iter().map(|(s, (t, n))| (s, t / n as f64)).collect();
        let mut rows: Vec<InconsistencyRow> = values
            .into_iter()
            .map(|(country, subset_id, value)| InconsistencyRow { above_mean: value > means[&subset_id], country, subset_id, value })
            .collect();
        rows.sort_by(|a, b| (&a.country, a.subset_id).cmp(&(&b.country, b.subset_id)));
        InconsistencyTable { rows, means }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("country,subset,value,above_mean\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:e},{}\n", r.country, r.subset_id, r.value, r.above_mean));
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    fn kl(p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
    }

    #[test]
    fn jsd_reference_values() {
        assert_eq!(information_radius(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((information_radius(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - LN_2).abs() < 1e-12);
        let (p, q) = ([0.5, 0.5], [0.25, 0.75]);
        let m = [0.375, 0.625];
        let want = 0.5 * kl(&p, &m) + 0.5 * kl(&q, &m);
        let got = information_radius(&p, &q).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.03382).abs() < 5e-6);
    }

    #[test]
    fn jsd_errors() {
        assert_eq!(information_radius(&[1.0], &[0.5, 0.5]), Err(AnalysisError::LengthMismatch(1, 2)));
        assert!(matches!(information_radius(&[0.5, 0.6], &[0.5, 0.5]), Err(AnalysisError::NotNormalized(_))));
    }

    proptest! {
        #[test]
        fn jsd_symmetric_and_bounded(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = random_simplex(&mut rng, n);
            let q = random_simplex(&mut rng, n);
            let a = information_radius(&p, &q).unwrap();
            prop_assert_eq!(a, information_radius(&q, &p).unwrap());
            prop_assert!((0.0..=LN_2).contains(&a));
            prop_assert_eq!(information_radius(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn inconsistency_extremes() {
        let v = [0.2; 5];
        assert_eq!(section_inconsistency(&v, &v, 5).unwrap(), 0.0);
        let a = [0.5, 0.5, 0.0, 0.0, 0.0];
        let b = [0.0, 0.0, 0.2, 0.3, 0.5];
        assert!((section_inconsistency(&a, &b, 5).unwrap() - LN_2 / 5.0).abs() < 1e-12);
        assert!(section_inconsistency(&a, &b, 4).is_err());
    }

    #[test]
    fn bound_vectors() {
        let fi = CountryCode::new("FI").unwrap();
        let v = vec![0.1, 0.2, 0.7];
        let theta: BTreeMap<Section, Vec<f64>> = Section::DIMENSIONED.iter().map(|s| (*s, v.clone())).collect();
        let b = bind_distributions(&fi, SubsetId::Decarbonisation, &theta).unwrap();
        let third: Vec<f64> = v.iter().map(|x| x / 3.0).collect();
        assert_eq!(b.values, [third.clone(), third.clone(), third].concat());
        assert_eq!(b.scope, Scope::Bound);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let parts: Vec<Vec<f64>> = (0..3).map(|_| random_simplex(&mut rng, 5)).collect();
            let theta: BTreeMap<Section, Vec<f64>> = Section::DIMENSIONED.iter().cloned().zip(parts.iter().cloned()).collect();
            let b = bind_distributions(&fi, SubsetId::EnergySecurity, &theta).unwrap();
            let cat = parts.concat();
            let total: f64 = cat.iter().sum();
            for (x, y) in b.values.iter().zip(&cat) {
                assert!((x - y / total).abs() < 1e-15);
            }
            assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        let mut partial = theta.clone();
        partial.remove(&Section::Policies);
        assert!(matches!(bind_distributions(&fi, SubsetId::Decarbonisation, &partial), Err(AnalysisError::MissingSection { .. })));
    }

    #[test]
    fn similarity_matrix_from_vectors() {
        let labels: Vec<String> = ["AT", "BE", "CY"].iter().map(|s| s.to_string()).collect();
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let m = SimilarityMatrix::from_vectors(labels.clone(), &v).unwrap();
        assert!((m.d[0][1] - LN_2).abs() < 1e-12);
        assert_eq!(m.d[2][0], m.d[0][2]);
        assert!(SimilarityMatrix::new(labels.clone(), m.d.clone()).is_ok());
        let mut bad = m.d.clone();
        bad[0][1] = 0.1;
        assert!(SimilarityMatrix::new(labels, bad).is_err());
    }

    #[test]
    fn scope_round_trip() {
        for s in ["bound", "objectives", "policies"] {
            let scope: Scope = s.parse().unwrap();
            assert_eq!(scope.to_string(), s);
            assert_eq!(serde_json::to_string(&scope).unwrap(), format!("\"{s}\""));
        }
        assert!("sideways".parse::<Scope>().is_err());
    }

    #[test]
    fn inconsistency_table_flags_above_mean() {
        let c = |s: &str| CountryCode::new(s).unwrap();
        let t = InconsistencyTable::new(vec![
            (c("BE"), SubsetId::Decarbonisation, 0.09),
            (c("AT"), SubsetId::Decarbonisation, 0.01),
            (c("AT"), SubsetId::EnergySecurity, 0.02),
        ]);
        assert!((t.means[&SubsetId::Decarbonisation] - 0.05).abs() < 1e-15);
        assert_eq!(t.rows[0].country.as_str(), "AT");
        let be = t.rows.iter().find(|r| r.country.as_str() == "BE").unwrap();
        assert!(be.above_mean);
        assert!(!t.rows[1].above_mean);
        assert_eq!(t.to_csv().lines().count(), 4);
    }
}
