//! Unsupervised grouping of trajectories: k-means with k-means++ restarts,
//! reliefF feature weighting, top-quantile feature selection, and the
//! contingency analysis against user-declared activities.
//!
//! Everything here is deterministic given the seed. Rows are processed in
//! sorted-id order internally, so results do not depend on input row order.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("k = {k} exceeds the number of rows ({rows})")]
    TooFewRows { k: usize, rows: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("feature importance is undefined for a single class")]
    SingleClass,
    #[error("rows have inconsistent dimensions")]
    RaggedMatrix,
}

#[derive(Clone, Debug)]
pub struct ClusterModel {
    pub k: usize,
    /// Centroids in the (normalized) feature space.
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<String, usize>,
    /// Total within-cluster sum of squared distances; the restart criterion.
    pub sse: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl ClusterModel {
    /// Recomputes the SSE from assignment and centroids (used by tests to
    /// confirm the stored compactness).
    pub fn recompute_sse(&self, ids: &[String], rows: &[Vec<f64>]) -> f64 {
        let mut sse = 0.0;
        for (id, row) in ids.iter().zip(rows) {
            let c = self.assignment[id];
            sse += sq_dist(row, &self.centroids[c]);
        }
        sse
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding, `restarts` independent starts,
/// and the lowest-SSE result kept. Initial centroids are drawn over rows in
/// sorted-id order, so the outcome is invariant under input row permutation.
pub fn kmeans(
    ids: &[String],
    rows: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterModel, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if rows.len() < k {
        return Err(ClusterError::TooFewRows { k, rows: rows.len() });
    }
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(ClusterError::RaggedMatrix);
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let data: Vec<&Vec<f64>> = order.iter().map(|&i| &rows[i]).collect();

    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<usize>)> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let centroids = plus_plus_seed(&data, k, &mut rng);
        let (centroids, assign, sse) = lloyd(&data, centroids);
        if best.as_ref().map_or(true, |(bs, _, _)| sse < *bs) {
            best = Some((sse, centroids, assign));
        }
    }
    let (sse, centroids, assign) = best.expect("at least one restart ran");
    let assignment = order
        .iter()
        .zip(assign)
        .map(|(&i, c)| (ids[i].clone(), c))
        .collect();
    Ok(ClusterModel { k, centroids, assignment, sse, seed, restarts: restarts.max(1) })
}

fn plus_plus_seed(data: &[&Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(data[rng.gen_range(0..data.len())].clone());
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; take the first
            // row not yet chosen to keep progress deterministic
            (0..data.len())
                .find(|&i| !centroids.iter().any(|c| c == data[i]))
                .unwrap_or(0)
        } else {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        };
        centroids.push(data[next].clone());
        for (i, p) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn lloyd(data: &[&Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let k = centroids.len();
    let d = data[0].len();
    let mut assign = vec![usize::MAX; data.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in data.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, centroid) in centroids.iter().enumerate() {
                let dist = sq_dist(p, centroid);
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in data.iter().enumerate() {
            counts[assign[i]] += 1;
            for (j, v) in p.iter().enumerate() {
                sums[assign[i]][j] += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // empty cluster: re-seed at the point farthest from its centroid
                let far = data
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (j, q)| {
                        sq_dist(p, &centroids[assign[*i]])
                            .total_cmp(&sq_dist(q, &centroids[assign[*j]]))
                            .then(j.cmp(i)) // smaller index wins ties
                    })
                    .map(|(i, _)| i)
                    .expect("data is non-empty");
                centroids[c] = data[far].clone();
            } else {
                for j in 0..d {
                    centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
    }
    let sse = data
        .iter()
        .enumerate()
        .map(|(i, p)| sq_dist(p, &centroids[assign[i]]))
        .sum();
    (centroids, assign, sse)
}

/// Result of a reliefF run: per-feature weights plus any classes whose
/// neighbor count had to be lowered below the requested one.
#[derive(Clone, Debug)]
pub struct ReliefWeights {
    pub weights: Vec<f64>,
    pub lowered_classes: Vec<(String, usize)>,
}

/// Deterministic reliefF: every instance is iterated (no sampling), distances
/// are Manhattan on range-scaled features, and miss contributions are
/// weighted by the class prior ratio. The `_seed` parameter is kept for API
/// stability; this variant draws no random numbers.
pub fn relieff(
    rows: &[Vec<f64>],
    labels: &[String],
    k_neighbors: usize,
    _seed: u64,
) -> Result<ReliefWeights, ClusterError> {
    assert_eq!(rows.len(), labels.len(), "one label per row");
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(ClusterError::RaggedMatrix);
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClusterError::SingleClass);
    }
    let class_of: Vec<usize> =
        labels.iter().map(|l| classes.iter().position(|c| c == l).unwrap()).collect();
    let class_count: Vec<usize> = (0..classes.len())
        .map(|c| class_of.iter().filter(|&&x| x == c).count())
        .collect();
    let prior: Vec<f64> = class_count.iter().map(|&c| c as f64 / n as f64).collect();

    // range scaling to [0, 1] for the diff computation
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let range: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
    let diff = |j: usize, a: &[f64], b: &[f64]| -> f64 {
        if range[j] <= 0.0 {
            0.0
        } else {
            (a[j] - b[j]).abs() / range[j]
        }
    };
    let manhattan = |a: &[f64], b: &[f64]| -> f64 { (0..d).map(|j| diff(j, a, b)).sum() };

    let mut lowered: BTreeMap<usize, usize> = BTreeMap::new();
    let mut weights = vec![0.0; d];
    for i in 0..n {
        // neighbors per class, nearest first; ties broken by row index
        let mut by_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); classes.len()];
        for other in 0..n {
            if other != i {
                by_class[class_of[other]].push((manhattan(&rows[i], &rows[other]), other));
            }
        }
        for neighbors in &mut by_class {
            neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let own = class_of[i];
        let k_hits = k_neighbors.min(by_class[own].len());
        if k_hits < k_neighbors {
            lowered.entry(own).or_insert(k_hits);
        }
        if k_hits > 0 {
            let norm = (n * k_hits) as f64;
            for &(_, h) in by_class[own].iter().take(k_hits) {
                for (j, w) in weights.iter_mut().enumerate() {
                    *w -= diff(j, &rows[i], &rows[h]) / norm;
                }
            }
        }
        for (c, neighbors) in by_class.iter().enumerate() {
            if c == own {
                continue;
            }
            let k_miss = k_neighbors.min(neighbors.len());
            if k_miss < k_neighbors {
                lowered.entry(c).or_insert(k_miss);
            }
            if k_miss == 0 {
                continue;
            }
            let ratio = prior[c] / (1.0 - prior[own]);
            let norm = (n * k_miss) as f64;
            for &(_, m) in neighbors.iter().take(k_miss) {
                for (j, w) in weights.iter_mut().enumerate() {
                    *w += ratio * diff(j, &rows[i], &rows[m]) / norm;
                }
            }
        }
    }
    Ok(ReliefWeights {
        weights,
        lowered_classes: lowered.into_iter().map(|(c, k)| (classes[c].clone(), k)).collect(),
    })
}

/// Indices of the features whose weight reaches the given quantile of the
/// weight distribution (e.g. 0.9 keeps the top decile; ties at the threshold
/// are all kept).
pub fn select_top_features(weights: &[f64], quantile: f64) -> Vec<usize> {
    assert!(!weights.is_empty(), "weights must be non-empty");
    assert!(quantile > 0.0 && quantile < 1.0, "quantile must be in (0, 1)");
    let mut sorted: Vec<f64> = weights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((quantile * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    let threshold = sorted[idx];
    (0..weights.len()).filter(|&i| weights[i] >= threshold).collect()
}

/// Contingency analysis of user-declared labels against cluster indices.
#[derive(Clone, Debug)]
pub struct ContingencyTable {
    pub labels: Vec<String>,
    pub clusters: Vec<usize>,
    /// `counts[label][cluster]`
    pub counts: Vec<Vec<u64>>,
    /// Per cluster, the label it maps to (maximizing the mapped diagonal).
    pub mapping: Vec<Option<usize>>,
    pub mapping_policy: &'static str,
    pub agreement: f64,
    pub labeled_total: u64,
    pub unlabeled: usize,
}

impl ContingencyTable {
    pub fn label_total(&self, label: usize) -> u64 {
        self.counts[label].iter().sum()
    }

    pub fn cluster_total(&self, cluster: usize) -> u64 {
        self.counts.iter().map(|row| row[cluster]).sum()
    }

    /// Fraction of a cluster's members whose declared label is the one the
    /// cluster maps to.
    pub fn cluster_precision(&self, cluster: usize) -> Option<f64> {
        let label = self.mapping[cluster]?;
        let total = self.cluster_total(cluster);
        (total > 0).then(|| self.counts[label][cluster] as f64 / total as f64)
    }

    /// Fraction of a label's members assigned to the cluster mapping to it.
    pub fn label_recall(&self, label: usize) -> Option<f64> {
        let cluster = self.mapping.iter().position(|&m| m == Some(label))?;
        let total = self.label_total(label);
        (total > 0).then(|| self.counts[label][cluster] as f64 / total as f64)
    }

    /// The mapped activity name for a cluster, when one exists.
    pub fn cluster_label(&self, cluster: usize) -> Option<&str> {
        let pos = self.clusters.iter().position(|&c| c == cluster)?;
        self.mapping[pos].map(|l| self.labels[l].as_str())
    }
}

/// Builds the label-by-cluster count matrix and picks the cluster-to-label
/// mapping that maximizes the mapped diagonal: exhaustively over all
/// injections when feasible (up to 9 clusters), greedily otherwise.
/// Trajectories without a label are excluded and counted.
pub fn contingency(
    user_labels: &BTreeMap<String, String>,
    assignment: &BTreeMap<String, usize>,
) -> ContingencyTable {
    let mut labels: Vec<String> = Vec::new();
    let mut clusters: Vec<usize> = assignment.values().copied().collect();
    clusters.sort_unstable();
    clusters.dedup();
    let mut pairs: Vec<(usize, usize)> = Vec::new(); // (label idx, cluster pos)
    let mut unlabeled = 0usize;
    for (id, &cluster) in assignment {
        match user_labels.get(id) {
            Some(label) => {
                let li = match labels.iter().position(|l| l == label) {
                    Some(i) => i,
                    None => {
                        labels.push(label.clone());
                        labels.len() - 1
                    }
                };
                let ci = clusters.binary_search(&cluster).expect("cluster present");
                pairs.push((li, ci));
            }
            None => unlabeled += 1,
        }
    }
    labels.sort();
    // re-derive label indices after sorting
    let mut counts = vec![vec![0u64; clusters.len()]; labels.len()];
    for (id, &cluster) in assignment {
        if let Some(label) = user_labels.get(id) {
            let li = labels.iter().position(|l| l == label).expect("label present");
            let ci = clusters.binary_search(&cluster).expect("cluster present");
            counts[li][ci] += 1;
        }
    }
    let labeled_total: u64 = counts.iter().flatten().sum();

    let (mapping, mapping_policy) = best_mapping(&counts);
    let diagonal: u64 = mapping
        .iter()
        .enumerate()
        .filter_map(|(c, &l)| l.map(|l| counts[l][c]))
        .sum();
    let agreement = if labeled_total > 0 { diagonal as f64 / labeled_total as f64 } else { 0.0 };
    let _ = pairs;
    ContingencyTable {
        labels,
        clusters,
        counts,
        mapping,
        mapping_policy,
        agreement,
        labeled_total,
        unlabeled,
    }
}

/// Cluster-to-label mapping maximizing the mapped diagonal.
fn best_mapping(counts: &[Vec<u64>]) -> (Vec<Option<usize>>, &'static str) {
    let n_labels = counts.len();
    let n_clusters = counts.first().map_or(0, Vec::len);
    if n_labels == 0 || n_clusters == 0 {
        return (vec![None; n_clusters], "empty");
    }
    if n_clusters <= 9 && n_labels <= 9 {
        // exhaustive over injective assignments of clusters to labels
        let mut best: Option<(u64, Vec<Option<usize>>)> = None;
        let mut current = vec![None; n_clusters];
        let mut used = vec![false; n_labels];
        fn recurse(
            counts: &[Vec<u64>],
            c: usize,
            current: &mut Vec<Option<usize>>,
            used: &mut Vec<bool>,
            best: &mut Option<(u64, Vec<Option<usize>>)>,
        ) {
            if c == current.len() {
                let score: u64 = current
                    .iter()
                    .enumerate()
                    .filter_map(|(ci, &l)| l.map(|l| counts[l][ci]))
                    .sum();
                if best.as_ref().map_or(true, |(bs, _)| score > *bs) {
                    *best = Some((score, current.clone()));
                }
                return;
            }
            for l in 0..used.len() {
                if !used[l] {
                    used[l] = true;
                    current[c] = Some(l);
                    recurse(counts, c + 1, current, used, best);
                    used[l] = false;
                }
            }
            if current.len() > used.len() {
                current[c] = None; // more clusters than labels: allow unmapped
                recurse(counts, c + 1, current, used, best);
            }
        }
        recurse(counts, 0, &mut current, &mut used, &mut best);
        (best.expect("at least one mapping").1, "exhaustive")
    } else {
        // greedy: repeatedly take the largest remaining cell
        let mut mapping = vec![None; n_clusters];
        let mut label_used = vec![false; n_labels];
        let mut cluster_used = vec![false; n_clusters];
        loop {
            let mut best: Option<(u64, usize, usize)> = None;
            for (l, row) in counts.iter().enumerate() {
                if label_used[l] {
                    continue;
                }
                for (c, &v) in row.iter().enumerate() {
                    if cluster_used[c] {
                        continue;
                    }
                    if best.map_or(true, |(bv, _, _)| v > bv) {
                        best = Some((v, l, c));
                    }
                }
            }
            match best {
                Some((_, l, c)) => {
                    mapping[c] = Some(l);
                    label_used[l] = true;
                    cluster_used[c] = true;
                }
                None => break,
            }
            if label_used.iter().all(|&u| u) || cluster_used.iter().all(|&u| u) {
                break;
            }
        }
        (mapping, "greedy")
    }
}

/// Agreement between two clusterings of the same ids: the fraction of ids on
/// the mapped diagonal under the best bijection between cluster index sets.
pub fn clustering_agreement(
    a: &BTreeMap<String, usize>,
    b: &BTreeMap<String, usize>,
) -> f64 {
    let as_labels: BTreeMap<String, String> =
        a.iter().map(|(id, c)| (id.clone(), format!("c{c}"))).collect();
    contingency(&as_labels, b).agreement
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i:03}")).collect()
    }

    #[test]
    fn kmeans_recovers_separated_groups() {
        // exhaustive over 2-partitions confirms this grouping minimizes SSE
        let rows: Vec<Vec<f64>> =
            [0.0, 0.1, 0.2, 10.0, 10.1].iter().map(|&v| vec![v]).collect();
        let model = kmeans(&ids(5), &rows, 2, 5, 7).unwrap();
        let a = model.assignment["t000"];
        assert_eq!(model.assignment["t001"], a);
        assert_eq!(model.assignment["t002"], a);
        let b = model.assignment["t003"];
        assert_eq!(model.assignment["t004"], b);
        assert_ne!(a, b);
        // group SSEs: 0.02 around mean 0.1, 0.005 around mean 10.05
        assert!((model.sse - 0.025).abs() < 1e-12, "sse {}", model.sse);
        assert!((model.recompute_sse(&ids(5), &rows) - model.sse).abs() < 1e-6 * model.sse.max(1.0));
    }

    #[test]
    fn k_equals_one_and_k_equals_n() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
        let one = kmeans(&ids(3), &rows, 1, 3, 1).unwrap();
        assert_eq!(one.centroids.len(), 1);
        assert!((one.centroids[0][0] - 2.0).abs() < 1e-12);
        let all = kmeans(&ids(3), &rows, 3, 3, 1).unwrap();
        assert_eq!(all.sse, 0.0);
        let mut seen: Vec<usize> = all.assignment.values().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn kmeans_errors_when_k_exceeds_rows() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            kmeans(&ids(2), &rows, 5, 1, 0).unwrap_err(),
            ClusterError::TooFewRows { k: 5, rows: 2 }
        );
    }

    #[test]
    fn kmeans_is_invariant_under_row_permutation() {
        let base_ids = ids(6);
        let rows: Vec<Vec<f64>> = [0.0, 0.2, 0.4, 9.0, 9.2, 9.4].iter().map(|&v| vec![v]).collect();
        let m1 = kmeans(&base_ids, &rows, 2, 4, 99).unwrap();
        // reverse the row order, keeping id-row pairing
        let rev_ids: Vec<String> = base_ids.iter().rev().cloned().collect();
        let rev_rows: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let m2 = kmeans(&rev_ids, &rev_rows, 2, 4, 99).unwrap();
        assert_eq!(m1.assignment, m2.assignment);
        assert_eq!(m1.sse, m2.sse);
    }

    #[test]
    fn sse_never_increases_with_more_restarts() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 3) as f64 * 5.0 + (i as f64) * 0.01, (i % 3) as f64 * -3.0])
            .collect();
        let few = kmeans(&ids(30), &rows, 3, 1, 3).unwrap();
        let many = kmeans(&ids(30), &rows, 3, 20, 3).unwrap();
        assert!(many.sse <= few.sse);
    }

    #[test]
    fn relieff_separator_beats_noise() {
        // feature 0 separates classes perfectly; feature 1 is noise
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut x = 0.137f64;
        for i in 0..40 {
            let class = i % 2;
            x = (x * 997.0).fract();
            rows.push(vec![class as f64, x]);
            labels.push(format!("c{class}"));
        }
        let w = relieff(&rows, &labels, 5, 0).unwrap();
        assert!(w.weights[0] > w.weights[1], "{:?}", w.weights);
        assert!(w.weights[0] > 0.0);
    }

    #[test]
    fn relieff_constant_feature_has_zero_weight() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![1.0, 1.0], vec![1.0, 1.1]];
        let labels = vec!["a".into(), "a".into(), "b".into(), "b".into()];
        let w = relieff(&rows, &labels, 1, 0).unwrap();
        assert_eq!(w.weights[0], 0.0);
    }

    #[test]
    fn relieff_two_class_hand_computed() {
        // {0, 0.1} class a, {1, 1.1} class b, k = 1:
        // each instance: hit diff 0.1/1.1, miss diffs 10/11, 9/11, 9/11, 10/11
        // total weight = (9 + 8 + 8 + 9) / 44 = 17/22
        let rows = vec![vec![0.0], vec![0.1], vec![1.0], vec![1.1]];
        let labels = vec!["a".into(), "a".into(), "b".into(), "b".into()];
        let w = relieff(&rows, &labels, 1, 0).unwrap();
        assert!((w.weights[0] - 17.0 / 22.0).abs() < 1e-12, "{}", w.weights[0]);
    }

    #[test]
    fn relieff_lowers_k_for_small_classes() {
        let rows = vec![vec![0.0], vec![0.1], vec![1.0]];
        let labels = vec!["a".into(), "a".into(), "b".into()];
        let w = relieff(&rows, &labels, 3, 0).unwrap();
        assert!(!w.lowered_classes.is_empty());
    }

    #[test]
    fn relieff_single_class_is_an_error() {
        let rows = vec![vec![0.0], vec![1.0]];
        let labels = vec!["a".into(), "a".into()];
        assert_eq!(relieff(&rows, &labels, 1, 0).unwrap_err(), ClusterError::SingleClass);
    }

    #[test]
    fn relieff_duplicate_column_keeps_sign_ordering() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut x = 0.511f64;
        for i in 0..30 {
            let class = i % 2;
            x = (x * 997.0).fract();
            // separator, noise, duplicate of separator
            rows.push(vec![class as f64, x, class as f64]);
            labels.push(format!("c{class}"));
        }
        let w = relieff(&rows, &labels, 3, 0).unwrap();
        assert!(w.weights[0] > w.weights[1]);
        assert!(w.weights[2] > w.weights[1]);
    }

    #[test]
    fn top_quantile_selection() {
        let w: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(select_top_features(&w, 0.9), vec![9]);
        let all_equal = vec![3.0; 6];
        assert_eq!(select_top_features(&all_equal, 0.9), vec![0, 1, 2, 3, 4, 5]);
        let w20: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(select_top_features(&w20, 0.9), vec![18, 19]);
    }

    fn table_from_counts(counts: &[(&str, usize, u64)]) -> ContingencyTable {
        // synthesize one trajectory per count unit
        let mut user = BTreeMap::new();
        let mut assign = BTreeMap::new();
        let mut n = 0usize;
        for &(label, cluster, count) in counts {
            for _ in 0..count {
                let id = format!("t{n:05}");
                user.insert(id.clone(), label.to_string());
                assign.insert(id, cluster);
                n += 1;
            }
        }
        contingency(&user, &assign)
    }

    #[test]
    fn identical_clusterings_agree_fully() {
        let t = table_from_counts(&[("a", 0, 10), ("b", 1, 20)]);
        assert_eq!(t.agreement, 1.0);
        // permuted cluster indices map back to full agreement
        let t = table_from_counts(&[("a", 1, 10), ("b", 0, 20)]);
        assert_eq!(t.agreement, 1.0);
        assert_eq!(t.cluster_label(1), Some("a"));
    }

    #[test]
    fn published_three_group_table_arithmetic() {
        // rows: cluster, columns: declared activity
        // mountainbiking cluster: 125 mtb, 20 racing, 39 biking
        let t = table_from_counts(&[
            ("mountainbiking", 0, 125),
            ("racingbiking", 0, 20),
            ("biking", 0, 39),
            ("mountainbiking", 1, 10),
            ("racingbiking", 1, 135),
            ("biking", 1, 47),
            ("mountainbiking", 2, 17),
            ("racingbiking", 2, 63),
            ("biking", 2, 141),
        ]);
        assert_eq!(t.labeled_total, 597);
        assert!((t.agreement - 401.0 / 597.0).abs() < 1e-12);
        assert!((t.agreement - 0.672).abs() < 0.001);
        let mtb = t.labels.iter().position(|l| l == "mountainbiking").unwrap();
        assert!((t.label_recall(mtb).unwrap() - 125.0 / 152.0).abs() < 1e-12);
        let precisions: Vec<f64> =
            (0..3).map(|c| t.cluster_precision(c).unwrap()).collect();
        assert!((precisions[0] - 125.0 / 184.0).abs() < 1e-12);
        assert!((precisions[1] - 135.0 / 192.0).abs() < 1e-12);
        assert!((precisions[2] - 141.0 / 221.0).abs() < 1e-12);
    }

    #[test]
    fn clustering_agreement_is_relabel_invariant() {
        let a: BTreeMap<String, usize> =
            [("x", 0), ("y", 0), ("z", 1)].iter().map(|&(i, c)| (i.to_string(), c)).collect();
        let b: BTreeMap<String, usize> =
            [("x", 5), ("y", 5), ("z", 2)].iter().map(|&(i, c)| (i.to_string(), c)).collect();
        assert_eq!(clustering_agreement(&a, &b), 1.0);
    }
}
