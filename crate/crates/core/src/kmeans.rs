//! Lloyd's K-Means with k-means++ seeding.
//!
//! This is the inner clustering engine: it runs `R` times per consensus step
//! on a small column subset, so it works on a dense copy of that subset and
//! keeps no shared state.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub n_clusters: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves further than this (Euclidean).
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(n_clusters: usize) -> Self {
        Self {
            n_clusters,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances of each row to its assigned centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after every assignment pass, starting with the seeding pass.
    pub inertia_trace: Vec<f64>,
    /// Set when the data held fewer than `n_clusters` distinct rows and
    /// seeding had to reuse duplicate rows.
    pub duplicate_seeds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seeding {
    pub centroids: Array2<f64>,
    /// Row index each centroid was copied from.
    pub rows: Vec<usize>,
    pub duplicate_seeds: bool,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn validate(x: ArrayView2<'_, f64>, n_clusters: usize) -> Result<()> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::invalid_arg("k-means needs at least one row"));
    }
    if d == 0 {
        return Err(Error::invalid_arg("k-means needs at least one column"));
    }
    if n_clusters == 0 {
        return Err(Error::invalid_arg("n_clusters must be at least 1"));
    }
    if n_clusters > n {
        return Err(Error::invalid_arg(format!(
            "n_clusters ({n_clusters}) exceeds the number of rows ({n})"
        )));
    }
    ensure_finite(x)
}

/// k-means++ seeding: first center uniform, each further center drawn with
/// probability proportional to its squared distance to the nearest center
/// chosen so far.
pub fn kmeans_init(x: ArrayView2<'_, f64>, n_clusters: usize, seed: u64) -> Result<Seeding> {
    validate(x, n_clusters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(plus_plus(x, n_clusters, &mut rng))
}

fn plus_plus(x: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Seeding {
    let n = x.nrows();
    let mut rows = Vec::with_capacity(k);
    let mut duplicate_seeds = false;

    let first = rng.random_range(0..n);
    rows.push(first);
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();

    while rows.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // every remaining weight is zero: no unseen distinct row is left
            Err(_) => {
                duplicate_seeds = true;
                rng.random_range(0..n)
            }
        };
        rows.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            let cand = sq_dist(x.row(i), x.row(next));
            if cand < *d {
                *d = cand;
            }
        }
    }

    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, &r) in rows.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(r));
    }
    Seeding {
        centroids,
        rows,
        duplicate_seeds,
    }
}

/// Assigns every row to its nearest centroid (ties go to the lower index).
/// Returns the labels and each row's squared distance to its centroid.
pub fn assign(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    let n = x.nrows();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0f64; n];
    for i in 0..n {
        let row = x.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.outer_iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
    }
    (labels, dists)
}

/// Recomputes centroids as cluster means. A cluster that lost all its rows is
/// moved onto the row lying farthest from its own (updated) centroid.
fn update(x: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let d = x.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (row, &l) in x.outer_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for (mut s, &c) in sums.outer_iter_mut().zip(&counts) {
        if c > 0 {
            s /= c as f64;
        }
    }

    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        let mut far: Vec<(usize, f64)> = x
            .outer_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (row, &l))| (i, sq_dist(row, sums.row(l))))
            .collect();
        // descending distance, ties to the lower row index
        far.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (slot, &c) in empty.iter().enumerate() {
            let (row, _) = far[slot % far.len()];
            sums.row_mut(c).assign(&x.row(row));
        }
    }
    sums
}

/// Lloyd's algorithm on every column of `x`.
pub fn kmeans_fit(x: ArrayView2<'_, f64>, params: &KMeansParams) -> Result<KMeansResult> {
    validate(x, params.n_clusters)?;
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::invalid_arg("tol must be a nonnegative number"));
    }
    let k = params.n_clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let seeding = plus_plus(x, k, &mut rng);
    let mut centroids = seeding.centroids;

    let (mut labels, mut dists) = assign(x.view(), centroids.view());
    let mut trace = vec![dists.iter().sum::<f64>()];
    let mut iterations_run = 0;

    for it in 1..=params.max_iter {
        let next = update(x, &labels, k);
        let shift = centroids
            .outer_iter()
            .zip(next.outer_iter())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        (labels, dists) = assign(x, centroids.view());
        trace.push(dists.iter().sum());
        iterations_run = it;
        if shift <= params.tol {
            break;
        }
    }

    Ok(KMeansResult {
        labels,
        inertia: *trace.last().unwrap(),
        centroids,
        iterations_run,
        inertia_trace: trace,
        duplicate_seeds: seeding.duplicate_seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn partition_sets(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        (0..k)
            .map(|c| {
                (0..labels.len())
                    .filter(|&i| labels[i] == c)
                    .collect::<BTreeSet<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// Exhaustive search over every assignment of rows to two clusters.
    fn best_two_partition(x: ArrayView2<'_, f64>) -> (f64, BTreeSet<BTreeSet<usize>>) {
        let n = x.nrows();
        let mut best = (f64::INFINITY, BTreeSet::new());
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut cost = 0.0;
            for c in 0..2 {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                let mut mean = vec![0.0; x.ncols()];
                for &i in &members {
                    for j in 0..x.ncols() {
                        mean[j] += x[[i, j]] / members.len() as f64;
                    }
                }
                for &i in &members {
                    for j in 0..x.ncols() {
                        cost += (x[[i, j]] - mean[j]).powi(2);
                    }
                }
            }
            if cost < best.0 {
                best = (cost, partition_sets(&labels));
            }
        }
        best
    }

    #[test]
    fn single_cluster_is_the_column_mean() {
        let x = array![
            [1.0, 2.0, 0.5],
            [3.0, -1.0, 0.0],
            [0.0, 0.0, 4.0],
            [2.0, 5.0, 1.5]
        ];
        let fit = kmeans_fit(x.view(), &KMeansParams::new(1).with_seed(3)).unwrap();
        assert_eq!(fit.labels, vec![0; 4]);
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        for j in 0..3 {
            assert!((fit.centroids[[0, j]] - mean[j]).abs() < 1e-12);
        }
        let variance_times_n: f64 = x
            .outer_iter()
            .map(|r| {
                r.iter()
                    .zip(mean.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum();
        assert!((fit.inertia - variance_times_n).abs() < 1e-9);
    }

    #[test]
    fn two_well_separated_pairs() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        let (_, oracle) = best_two_partition(x.view());
        let expected: BTreeSet<BTreeSet<usize>> = [BTreeSet::from([0, 1]), BTreeSet::from([2, 3])]
            .into_iter()
            .collect();
        assert_eq!(oracle, expected);
        for seed in 0..10 {
            let fit = kmeans_fit(x.view(), &KMeansParams::new(2).with_seed(seed)).unwrap();
            assert_eq!(partition_sets(&fit.labels), oracle);
        }
    }

    #[test]
    fn one_point_per_cluster_when_k_equals_n() {
        let x = array![[0.0, 1.0], [2.0, 2.0], [5.0, -1.0], [9.0, 0.0], [3.0, 3.0]];
        let fit = kmeans_fit(x.view(), &KMeansParams::new(5).with_seed(11)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let distinct: BTreeSet<_> = fit.labels.iter().collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn rejects_too_many_clusters_and_bad_data() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            kmeans_fit(x.view(), &KMeansParams::new(3)),
            Err(Error::InvalidArgument(_))
        ));
        let bad = array![[0.0], [f64::NAN]];
        assert!(matches!(
            kmeans_fit(bad.view(), &KMeansParams::new(1)),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn seeding_with_exactly_k_distinct_rows_uses_all_of_them() {
        let x = array![[1.0, 1.0], [4.0, 0.0], [1.0, 1.0], [-2.0, 7.0], [4.0, 0.0]];
        for seed in 0..20 {
            let s = kmeans_init(x.view(), 3, seed).unwrap();
            let got: BTreeSet<Vec<u64>> = s
                .centroids
                .outer_iter()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            assert_eq!(got.len(), 3);
            assert!(!s.duplicate_seeds);
        }
    }

    #[test]
    fn plus_plus_never_picks_a_zero_weight_point() {
        let x = array![[0.0], [0.0], [100.0]];
        for seed in 0..50 {
            let s = kmeans_init(x.view(), 2, seed).unwrap();
            let mut c: Vec<f64> = s.centroids.iter().copied().collect();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![0.0, 100.0]);
        }
    }

    #[test]
    fn seeding_is_deterministic() {
        let x = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 13) % 11) as f64);
        let a = kmeans_init(x.view(), 4, 99).unwrap();
        let b = kmeans_init(x.view(), 4, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_distinct_rows_is_flagged() {
        let x = array![[2.0, 2.0], [2.0, 2.0], [2.0, 2.0]];
        let fit = kmeans_fit(x.view(), &KMeansParams::new(2).with_seed(0)).unwrap();
        assert!(fit.duplicate_seeds);
        assert!(fit.labels.iter().all(|&l| l < 2));
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn empty_cluster_is_reseeded_at_the_farthest_row() {
        // Both centroids on the left cluster: the second one starves.
        let x = array![[0.0], [0.2], [0.4], [10.0]];
        let labels = vec![0, 0, 0, 0];
        let c = update(x.view(), &labels, 2);
        assert_eq!(c[[1, 0]], 10.0);
    }

    fn matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = Array2<f64>> {
        (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-50.0..50.0f64, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inertia_never_increases(x in matrix(40, 5), k in 1usize..5, seed in 0u64..1000) {
            let k = k.min(x.nrows());
            let fit = kmeans_fit(x.view(), &KMeansParams::new(k).with_seed(seed).with_tol(0.0)).unwrap();
            for w in fit.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.inertia_trace);
            }
            prop_assert!(fit.iterations_run <= 300);
            prop_assert!(fit.labels.iter().all(|&l| l < k));
        }

        #[test]
        fn terminal_assignment_is_locally_optimal(x in matrix(10, 3), k in 1usize..4, seed in 0u64..1000) {
            let k = k.min(x.nrows());
            let fit = kmeans_fit(x.view(), &KMeansParams::new(k).with_seed(seed).with_tol(0.0)).unwrap();
            for (i, row) in x.outer_iter().enumerate() {
                let own = sq_dist(row, fit.centroids.row(fit.labels[i]));
                for c in fit.centroids.outer_iter() {
                    prop_assert!(own <= sq_dist(row, c));
                }
            }
            // one more Lloyd step from the converged state changes nothing
            let next = update(x.view(), &fit.labels, k);
            let (_, d) = assign(x.view(), next.view());
            let again: f64 = d.iter().sum();
            prop_assert!((again - fit.inertia).abs() <= 1e-9 * (1.0 + fit.inertia));
        }

        #[test]
        fn fit_is_deterministic(x in matrix(30, 4), seed in 0u64..1000) {
            let k = 3.min(x.nrows());
            let p = KMeansParams::new(k).with_seed(seed);
            prop_assert_eq!(kmeans_fit(x.view(), &p).unwrap(), kmeans_fit(x.view(), &p).unwrap());
        }
    }
}
