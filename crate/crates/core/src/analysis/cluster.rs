use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, SimilarityMatrix};
use crate::rng::{label_hash, stream_rng};

const KMEANS_MAX_ITER: usize = 300;

/// One agglomeration step. Leaves are nodes `0..n`; merge `i` creates node `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf indices under each node.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let n = self.labels.len();
        let mut nodes: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut both = [nodes[m.left].clone(), nodes[m.right].clone()].concat();
            both.sort_unstable();
            nodes.push(both);
        }
        nodes
    }

    pub fn max_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }
}

/// Average-linkage agglomeration. Among equal linkage values the pair whose
/// smallest member labels sort first is merged.
pub fn cluster_hierarchical(m: &SimilarityMatrix) -> Dendrogram {
    let n = m.len();
    // cross-pair distance sums between active clusters, keyed by node id
    let mut sums: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            sums.insert((i, j), m.d[i][j]);
        }
    }
    let mut size = vec![1usize; n];
    let mut min_label: Vec<&str> = m.labels.iter().map(String::as_str).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut floor = 0.0f64;

    while active.len() > 1 {
        let mut best: Option<(f64, (&str, &str), usize, usize)> = None;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let avg = sums[&(a, b)] / (size[a] * size[b]) as f64;
                let pair = if min_label[a] <= min_label[b] { (min_label[a], min_label[b]) } else { (min_label[b], min_label[a]) };
                let better = match &best {
                    None => true,
                    Some((h, p, _, _)) => avg < *h || (avg == *h && pair < *p),
                };
                if better {
                    best = Some((avg, pair, a, b));
                }
            }
        }
        let (avg, _, a, b) = best.expect("at least two active clusters");
        let node = size.len();
        floor = floor.max(avg);
        merges.push(Merge { left: a, right: b, height: floor, size: size[a] + size[b] });
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let s = sums[&(a.min(c), a.max(c))] + sums[&(b.min(c), b.max(c))];
            sums.insert((c, node), s);
        }
        size.push(size[a] + size[b]);
        min_label.push(min_label[a].min(min_label[b]));
        active.push(node);
    }
    Dendrogram { labels: m.labels.clone(), merges }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ClusterMethod {
    Hierarchical { threshold: f64 },
    Kmeans { k: usize, seed: u64 },
}

/// Cluster ids are dense and numbered by first occurrence in `labels` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<String>,
    pub clusters: Vec<usize>,
    #[serde(flatten)]
    pub method: ClusterMethod,
}

impl ClusterAssignment {
    fn canonical(labels: Vec<String>, raw: &[usize], method: ClusterMethod) -> Self {
        let mut map = BTreeMap::new();
        let clusters = raw
            .iter()
            .map(|r| {
                let next = map.len();
                *map.entry(*r).or_insert(next)
            })
            .collect();
        ClusterAssignment { labels, clusters, method }
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label).map(|i| self.clusters[i])
    }
}

/// Groups leaves joined by merges strictly below `threshold`.
pub fn cut(den: &Dendrogram, threshold: f64) -> Result<ClusterAssignment, AnalysisError> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(AnalysisError::InvalidThreshold(threshold));
    }
    let n = den.labels.len();
    let mut node_of_leaf: Vec<usize> = (0..n).collect();
    for (i, m) in den.merges.iter().enumerate() {
        if m.height >= threshold {
            break;
        }
        for r in node_of_leaf.iter_mut() {
            if *r == m.left || *r == m.right {
                *r = n + i;
            }
        }
    }
    Ok(ClusterAssignment::canonical(den.labels.clone(), &node_of_leaf, ClusterMethod::Hierarchical { threshold }))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Lloyd's k-means. The first center is drawn from `seed`, the rest by greedy
/// farthest-point selection. Points are processed in label order, so the
/// partition does not depend on input order.
pub fn cluster_kmeans(labels: &[String], vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment, AnalysisError> {
    let n = vectors.len();
    if labels.len() != n {
        return Err(AnalysisError::LengthMismatch(labels.len(), n));
    }
    if k == 0 || k > n {
        return Err(AnalysisError::KTooLarge { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    let pts: Vec<&[f64]> = order.iter().map(|&i| vectors[i].as_slice()).collect();

    let mut rng = stream_rng(seed, label_hash("kmeans"), 0);
    let mut centers: Vec<Vec<f64>> = vec![pts[rng.random_range(0..n)].to_vec()];
    while centers.len() < k {
        let mut far = 0;
        let mut far_d = -1.0;
        for (i, p) in pts.iter().enumerate() {
            let d = centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min);
            if d > far_d {
                far = i;
                far_d = d;
            }
        }
        centers.push(pts[far].to_vec());
    }

    let mut assign: Vec<usize> = pts.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = pts.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            if members.is_empty() {
                continue;
            }
            for (j, x) in center.iter_mut().enumerate() {
                *x = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = pts.iter().map(|p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }

    let mut raw = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        raw[i] = assign[pos];
    }
    Ok(ClusterAssignment::canonical(labels.to_vec(), &raw, ClusterMethod::Kmeans { k, seed }))
}

/// Within-cluster sum of squared distances to cluster means.
pub fn inertia(vectors: &[Vec<f64>], clusters: &[usize]) -> f64 {
    let k = clusters.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> = vectors.iter().zip(clusters).filter(|(_, &a)| a == c).map(|(v, _)| v).collect();
            if members.is_empty() {
                return 0.0;
            }
            let dim = members[0].len();
            let mean: Vec<f64> = (0..dim).map(|j| members.iter().map(|v| v[j]).sum::<f64>() / members.len() as f64).collect();
            members.iter().map(|v| sq_dist(v, &mean)).sum::<f64>()
        })
        .sum()
}

/// Pairwise counts of shared clusters across several clusterings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u32>>,
}

/// Entry `(i, j)` counts the assignments in which `i` and `j` share a
/// cluster; the diagonal counts the assignments containing `i`.
pub fn cooccurrence(assignments: &[ClusterAssignment]) -> CooccurrenceMatrix {
    let mut labels: Vec<String> = assignments.iter().flat_map(|a| a.labels.iter().cloned()).collect();
    labels.sort();
    labels.dedup();
    let n = labels.len();
    let mut counts = vec![vec![0u32; n]; n];
    for a in assignments {
        let slots: Vec<(usize, usize)> = a.labels.iter().zip(&a.clusters).map(|(l, &c)| (labels.binary_search(l).expect("label collected above"), c)).collect();
        for &(i, ci) in &slots {
            for &(j, cj) in &slots {
                if ci == cj {
                    counts[i][j] += 1;
                }
            }
        }
    }
    CooccurrenceMatrix { labels, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    fn random_matrix(rng: &mut impl Rng, n: usize) -> SimilarityMatrix {
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                d[i][j] = rng.random::<f64>();
                d[j][i] = d[i][j];
            }
        }
        SimilarityMatrix::new(labels(n), d).unwrap()
    }

    /// Recomputes every cross-cluster average from leaves at each step.
    fn brute_force(m: &SimilarityMatrix) -> Vec<(Vec<usize>, f64)> {
        let mut clusters: Vec<Vec<usize>> = (0..m.len()).map(|i| vec![i]).collect();
        let mut out = vec![];
        while clusters.len() > 1 {
            let mut best = (f64::INFINITY, String::new(), String::new(), 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += m.d[i][j];
                        }
                    }
                    let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                    let la = clusters[a].iter().map(|&i| m.labels[i].clone()).min().unwrap();
                    let lb = clusters[b].iter().map(|&i| m.labels[i].clone()).min().unwrap();
                    let (lo, hi) = if la <= lb { (la, lb) } else { (lb, la) };
                    if avg < best.0 || (avg == best.0 && (lo.clone(), hi.clone()) < (best.1.clone(), best.2.clone())) {
                        best = (avg, lo, hi, a, b);
                    }
                }
            }
            let (_, _, _, a, b) = best;
            let mut merged = [clusters[a].clone(), clusters[b].clone()].concat();
            merged.sort_unstable();
            clusters.remove(b);
            clusters.remove(a);
            clusters.push(merged.clone());
            out.push((merged, best.0));
        }
        out
    }

    #[test]
    fn linkage_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let m = random_matrix(&mut rng, 8);
            let den = cluster_hierarchical(&m);
            let members = den.members();
            let oracle = brute_force(&m);
            assert_eq!(den.merges.len(), 7);
            for (i, (merge, (set, h))) in den.merges.iter().zip(&oracle).enumerate() {
                assert_eq!(&members[8 + i], set);
                assert!((merge.height - h).abs() < 1e-12);
                assert_eq!(merge.size, set.len());
            }
            assert!(den.merges.windows(2).all(|w| w[0].height <= w[1].height));
        }
    }

    #[test]
    fn ties_merge_smallest_labels_first() {
        let d = vec![vec![0.0, 1.0, 1.0, 1.0], vec![1.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0, 0.0]];
        let m = SimilarityMatrix::new(vec!["DE".into(), "CZ".into(), "AT".into(), "BE".into()], d).unwrap();
        let den = cluster_hierarchical(&m);
        let first = den.merges[0];
        let pair = [den.labels[first.left].as_str(), den.labels[first.right].as_str()];
        assert!(pair.contains(&"AT") && pair.contains(&"BE"));
    }

    #[test]
    fn cut_extremes_and_blobs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(&mut rng, 6);
        let den = cluster_hierarchical(&m);
        assert_eq!(cut(&den, 0.0).unwrap().clusters, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(cut(&den, den.max_height() + 1.0).unwrap().num_clusters(), 1);
        assert_eq!(cut(&den, f64::INFINITY).unwrap().num_clusters(), 1);
        assert!(cut(&den, -0.1).is_err());
        assert!(cut(&den, f64::NAN).is_err());

        // two blobs: {0,1,2} and {3,4}
        let blob = |i: usize| usize::from(i >= 3);
        let d: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..5)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else if blob(i) == blob(j) {
                            0.01
                        } else {
                            0.6
                        }
                    })
                    .collect()
            })
            .collect();
        let den = cluster_hierarchical(&SimilarityMatrix::new(labels(5), d).unwrap());
        assert_eq!(cut(&den, 0.3).unwrap().clusters, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn cut_counts_follow_merge_heights() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let m = random_matrix(&mut rng, 7);
        let den = cluster_hierarchical(&m);
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let below = den.merges.iter().filter(|mg| mg.height < t).count();
            assert_eq!(cut(&den, t).unwrap().num_clusters(), 7 - below);
        }
    }

    #[test]
    fn kmeans_edges() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
        let l = labels(6);
        assert_eq!(cluster_kmeans(&l, &v, 6, 0).unwrap().num_clusters(), 6);
        assert_eq!(cluster_kmeans(&l, &v, 1, 0).unwrap().clusters, vec![0; 6]);
        assert_eq!(cluster_kmeans(&l, &v, 7, 0), Err(AnalysisError::KTooLarge { k: 7, n: 6 }));
        assert_eq!(cluster_kmeans(&l, &v, 3, 9).unwrap(), cluster_kmeans(&l, &v, 3, 9).unwrap());
    }

    #[test]
    fn kmeans_two_blobs_reach_exhaustive_minimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for trial in 0..20 {
            let n = 10;
            let v: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let off = if i % 2 == 0 { 0.0 } else { 5.0 };
                    vec![off + rng.random::<f64>(), off + rng.random::<f64>()]
                })
                .collect();
            let a = cluster_kmeans(&labels(n), &v, 2, trial).unwrap();
            for i in 0..n {
                assert_eq!(a.clusters[i] == a.clusters[0], i % 2 == 0);
            }
            let mut best = f64::INFINITY;
            for mask in 1u32..(1 << n) - 1 {
                let c: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
                best = best.min(inertia(&v, &c));
            }
            assert!(inertia(&v, &a.clusters) <= best + 1e-12);
        }
    }

    #[test]
    fn assignments_invariant_to_label_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 8;
        let v: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let l = labels(n);
        let perm = [5, 2, 7, 0, 1, 6, 3, 4];
        let pv: Vec<Vec<f64>> = perm.iter().map(|&i| v[i].clone()).collect();
        let pl: Vec<String> = perm.iter().map(|&i| l[i].clone()).collect();
        let a = cluster_kmeans(&l, &v, 3, 4).unwrap();
        let b = cluster_kmeans(&pl, &pv, 3, 4).unwrap();
        for i in 0..n {
            for j in 0..n {
                let same_a = a.clusters[i] == a.clusters[j];
                let (pi, pj) = (perm.iter().position(|&x| x == i).unwrap(), perm.iter().position(|&x| x == j).unwrap());
                assert_eq!(same_a, b.clusters[pi] == b.clusters[pj]);
            }
        }

        let m =
            SimilarityMatrix::from_vectors(l.clone(), &v.iter().map(|x| x.iter().map(|y| y / x.iter().sum::<f64>()).collect()).collect::<Vec<_>>()).unwrap();
        let pm = SimilarityMatrix::new(pl.clone(), perm.iter().map(|&i| perm.iter().map(|&j| m.d[i][j]).collect()).collect()).unwrap();
        let t = cluster_hierarchical(&m).merges[3].height + 1e-9;
        let ca = cut(&cluster_hierarchical(&m), t).unwrap();
        let cb = cut(&cluster_hierarchical(&pm), t).unwrap();
        for label in &l {
            for other in &l {
                assert_eq!(ca.cluster_of(label) == ca.cluster_of(other), cb.cluster_of(label) == cb.cluster_of(other));
            }
        }
    }

    #[test]
    fn cooccurrence_matches_pair_counting() {
        let mk = |ls: &[&str], cs: &[usize]| ClusterAssignment {
            labels: ls.iter().map(|s| s.to_string()).collect(),
            clusters: cs.to_vec(),
            method: ClusterMethod::Hierarchical { threshold: 0.5 },
        };
        let assignments = vec![mk(&["AT", "BE", "CY", "DK"], &[0, 0, 1, 1]), mk(&["AT", "BE", "CY", "DK"], &[0, 1, 1, 0]), mk(&["AT", "BE", "DK"], &[0, 0, 0])];
        let m = cooccurrence(&assignments);
        assert_eq!(m.labels, ["AT", "BE", "CY", "DK"]);
        for (i, li) in m.labels.iter().enumerate() {
            for (j, lj) in m.labels.iter().enumerate() {
                let want = assignments.iter().filter(|a| matches!((a.cluster_of(li), a.cluster_of(lj)), (Some(x), Some(y)) if x == y)).count() as u32;
                assert_eq!(m.counts[i][j], want);
                assert_eq!(m.counts[i][j], m.counts[j][i]);
            }
        }
        assert_eq!(m.counts[2][2], 2);

        let all_one: Vec<ClusterAssignment> = (0..5).map(|_| mk(&["AT", "BE", "CY"], &[0, 0, 0])).collect();
        assert!(cooccurrence(&all_one).counts.iter().flatten().all(|&c| c == 5));
    }

    #[test]
    fn assignment_json_shape() {
        let a = ClusterAssignment { labels: vec!["AT".into()], clusters: vec![0], method: ClusterMethod::Kmeans { k: 1, seed: 3 } };
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["method"], "kmeans");
        assert_eq!(v["k"], 1);
        let back: ClusterAssignment = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }
}
