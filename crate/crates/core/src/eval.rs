//! Clustering quality metrics and a Lloyd k-means baseline.

use nalgebra::{DMatrix, DVector};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{validate_labels, Dataset};

/// Hard assignment of `n` samples to classes `0..k`, every class non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        validate_labels(&labels, labels.len())?;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { labels, k })
    }

    /// Relabels arbitrary ids to `0..k` in order of first appearance.
    pub fn from_raw<T: Eq + std::hash::Hash + Copy>(raw: &[T]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|r| {
                let next = ids.len();
                *ids.entry(*r).or_insert(next)
            })
            .collect();
        Self { labels, k: ids.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }
}

/// `table[p][t]` counts samples with predicted class `p` and true class `t`.
fn contingency(pred: &Partition, truth: &Partition) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidLabels("empty partition".into()));
    }
    let mut table = vec![vec![0usize; truth.k]; pred.k];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        table[p][t] += 1;
    }
    Ok(table)
}

/// Best-map accuracy: matched fraction under the optimal one-to-one label
/// correspondence (Hungarian algorithm on the zero-padded contingency table).
pub fn accuracy(pred: &Partition, truth: &Partition) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let size = pred.k.max(truth.k);
    let weights = Matrix::from_fn(size, size, |(p, t)| {
        table.get(p).and_then(|row| row.get(t)).copied().unwrap_or(0) as i64
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

/// Mutual information normalized by the geometric mean of the two
/// entropies (natural logs). Zero when either side has a single class.
pub fn nmi(pred: &Partition, truth: &Partition) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let cols: Vec<f64> = (0..truth.k)
        .map(|t| table.iter().map(|r| r[t]).sum::<usize>() as f64)
        .collect();
    let entropy = |m: &[f64]| -> f64 {
        m.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (hp, ht) = (entropy(&rows), entropy(&cols));
    if hp <= 0.0 || ht <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (p, row) in table.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += (c / n) * (n * c / (rows[p] * cols[t])).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Fraction of samples belonging to the majority true class of their cluster.
pub fn purity(pred: &Partition, truth: &Partition) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let hits: usize = table.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / pred.len() as f64)
}

pub const KMEANS_MAX_ITERS: usize = 300;
pub const KMEANS_DEFAULT_RESTARTS: usize = 10;

/// Outcome of one k-means restart.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub partition: Partition,
    pub centroids: DMatrix<f64>,
    pub wcss: f64,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(a: nalgebra::DVectorView<'_, f64>, b: nalgebra::DVectorView<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first centre uniform, then proportional to D².
fn seed_centroids(x: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = x.ncols();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|j| sq_dist(x.column(j), x.column(chosen[0]))).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // all remaining mass is zero: duplicates only
            Err(_) => (0..n).find(|j| !chosen.contains(j)).unwrap_or(0),
        };
        chosen.push(next);
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.column(j), x.column(next)));
        }
    }
    x.select_columns(&chosen)
}

fn assign(x: &DMatrix<f64>, centroids: &DMatrix<f64>, labels: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for (j, label) in labels.iter_mut().enumerate() {
        let (best, d) = (0..centroids.ncols())
            .map(|c| (c, sq_dist(x.column(j), centroids.column(c))))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        *label = best;
        total += d;
    }
    total
}

fn lloyd_once(x: &DMatrix<f64>, k: usize, rng: &mut impl Rng, restart: usize) -> KMeansFit {
    let (m, n) = x.shape();
    let mut centroids = seed_centroids(x, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut prev = labels.clone();
    let mut wcss = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITERS {
        wcss = assign(x, &centroids, &mut labels);
        history.push(wcss);
        if labels == prev {
            break;
        }
        prev.clone_from(&labels);
        let mut sums = DMatrix::zeros(m, k);
        let mut counts = vec![0usize; k];
        for (j, &l) in labels.iter().enumerate() {
            let mut col = sums.column_mut(l);
            col += x.column(j);
            counts[l] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            // an emptied cluster keeps its previous centre
            if count > 0 {
                let mean: DVector<f64> = sums.column(c) / count as f64;
                centroids.set_column(c, &mean);
            }
        }
    }
    KMeansFit {
        partition: Partition::from_raw(&labels),
        centroids,
        wcss,
        wcss_history: history,
        restart,
    }
}

/// Best-of-`restarts` Lloyd iteration with k-means++ seeding.
pub fn lloyd_kmeans_fit(x: &Dataset, k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let n = x.samples();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k = {k} invalid for {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let fit = lloyd_once(x.values(), k, &mut rng, r);
        // strict improvement only, so ties go to the earliest restart
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn lloyd_kmeans(x: &Dataset, k: usize, seed: u64, restarts: usize) -> Result<Partition> {
    Ok(lloyd_kmeans_fit(x, k, seed, restarts)?.partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(l: &[usize]) -> Partition {
        Partition::new(l.to_vec()).unwrap()
    }

    #[test]
    fn identical_partitions_score_one() {
        let a = p(&[0, 0, 1, 2, 2, 1]);
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        assert_abs_diff_eq!(nmi(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(purity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn permuted_labels_score_one() {
        let truth = p(&[0, 0, 1, 1, 2, 2]);
        let pred = p(&[2, 2, 0, 0, 1, 1]);
        assert_eq!(accuracy(&pred, &truth).unwrap(), 1.0);
        assert_abs_diff_eq!(nmi(&pred, &truth).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn accuracy_and_purity_small_case() {
        let truth = p(&[0, 0, 1, 1]);
        let pred = p(&[0, 1, 1, 1]);
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.75);
        assert_eq!(purity(&pred, &truth).unwrap(), 0.75);
    }

    #[test]
    fn nmi_independent_is_zero() {
        assert_eq!(nmi(&p(&[0, 1, 0, 1]), &p(&[0, 0, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn nmi_contingency_value() {
        // H(truth) = ln 2; H(pred) = -(3/4)ln(3/4) - (1/4)ln(1/4);
        // I = (1/2)ln(4/3) + (1/4)ln(2/3) + (1/4)ln 2, from the 2x2 table.
        let v = nmi(&p(&[0, 0, 0, 1]), &p(&[0, 0, 1, 1])).unwrap();
        assert_abs_diff_eq!(v, 0.345_592_029_944_211_3, epsilon = 1e-12);
    }

    #[test]
    fn single_cluster_conventions() {
        let truth = p(&[0, 0, 0, 1, 1, 1]);
        let giant = p(&[0; 6]);
        assert_eq!(nmi(&giant, &truth).unwrap(), 0.0);
        assert_eq!(purity(&giant, &truth).unwrap(), 0.5);
        assert_eq!(accuracy(&giant, &truth).unwrap(), 0.5);
    }

    #[test]
    fn length_mismatch() {
        assert!(accuracy(&p(&[0, 1]), &p(&[0, 1, 1])).is_err());
        assert!(nmi(&p(&[0, 1]), &p(&[0, 1, 1])).is_err());
        assert!(purity(&p(&[0, 1]), &p(&[0, 1, 1])).is_err());
    }

    #[test]
    fn unequal_class_counts_are_padded() {
        let truth = p(&[0, 0, 1, 1, 1]);
        let pred = p(&[0, 1, 2, 2, 3]);
        // best map: 0->0 (1), 2->1 (2)
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.6);
    }

    #[test]
    fn from_raw_compacts() {
        let part = Partition::from_raw(&[7, 7, 3, 9, 3]);
        assert_eq!(part.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(part.num_classes(), 3);
    }

    fn blobs() -> Dataset {
        let v = DMatrix::from_row_slice(2, 6, &[0.0, 0.1, 0.2, 9.0, 9.1, 9.2, 0.0, 0.1, 0.0, 5.0, 5.1, 5.0]);
        Dataset::new(v, None).unwrap()
    }

    #[test]
    fn kmeans_separates_blobs() {
        let part = lloyd_kmeans(&blobs(), 2, 0, 3).unwrap();
        assert_eq!(accuracy(&part, &p(&[0, 0, 0, 1, 1, 1])).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let fit = lloyd_kmeans_fit(&blobs(), 6, 1, 2).unwrap();
        assert_eq!(fit.partition.num_classes(), 6);
        assert_eq!(fit.wcss, 0.0);
    }

    #[test]
    fn kmeans_rejects_large_k() {
        assert!(lloyd_kmeans(&blobs(), 7, 0, 1).is_err());
    }

    #[test]
    fn kmeans_deterministic() {
        let a = lloyd_kmeans_fit(&blobs(), 3, 5, 4).unwrap();
        let b = lloyd_kmeans_fit(&blobs(), 3, 5, 4).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.wcss_history, b.wcss_history);
    }

    fn exhaustive_accuracy(pred: &[usize], truth: &[usize], k: usize) -> f64 {
        fn permute(perm: &mut Vec<usize>, start: usize, best: &mut usize, pred: &[usize], truth: &[usize]) {
            if start == perm.len() {
                let hits = pred.iter().zip(truth).filter(|(a, b)| perm[**a] == **b).count();
                *best = (*best).max(hits);
                return;
            }
            for i in start..perm.len() {
                perm.swap(start, i);
                permute(perm, start + 1, best, pred, truth);
                perm.swap(start, i);
            }
        }
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0;
        permute(&mut perm, 0, &mut best, pred, truth);
        best as f64 / pred.len() as f64
    }

    proptest! {
        #[test]
        fn accuracy_matches_exhaustive(
            k in 1usize..=6,
            raw in prop::collection::vec((0usize..6, 0usize..6), 1..40),
        ) {
            let pred_raw: Vec<usize> = raw.iter().map(|r| r.0 % k).collect();
            let truth_raw: Vec<usize> = raw.iter().map(|r| r.1 % k).collect();
            let pred = Partition::from_raw(&pred_raw);
            let truth = Partition::from_raw(&truth_raw);
            let fast = accuracy(&pred, &truth).unwrap();
            prop_assert!((fast - exhaustive_accuracy(&pred_raw, &truth_raw, k)).abs() < 1e-12);
        }

        #[test]
        fn metrics_relabel_invariant(
            raw in prop::collection::vec((0usize..4, 0usize..4), 2..40),
            shift in 1usize..4,
        ) {
            let pred = Partition::from_raw(&raw.iter().map(|r| r.0).collect::<Vec<_>>());
            let truth = Partition::from_raw(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
            let k = pred.num_classes();
            let rotated = Partition::new(pred.labels().iter().map(|l| (l + shift) % k).collect()).unwrap();
            prop_assert_eq!(accuracy(&pred, &truth).unwrap(), accuracy(&rotated, &truth).unwrap());
            prop_assert_eq!(purity(&pred, &truth).unwrap(), purity(&rotated, &truth).unwrap());
            prop_assert!((nmi(&pred, &truth).unwrap() - nmi(&rotated, &truth).unwrap()).abs() < 1e-12);
            for v in [accuracy(&pred, &truth).unwrap(), purity(&pred, &truth).unwrap(), nmi(&pred, &truth).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn kmeans_wcss_non_increasing(seed in any::<u64>(), n in 5usize..40, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-3.0..3.0));
            let fit = lloyd_kmeans_fit(&Dataset::new(v, None).unwrap(), k.min(n), seed, 1).unwrap();
            for w in fit.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }
}
