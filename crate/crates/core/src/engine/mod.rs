//! The agglomeration loop.
//!
//! Step `e` takes the current representatives, runs `R` feature-subsampled
//! K-Means fits on them, groups representatives whose label rows agree in
//! every repetition, and keeps one medoid per group. The loop ends on the
//! first step that merges nothing.

mod hierarchy;

pub use hierarchy::{reconstruct_final_clusters, HierarchyNode, HierarchyTree};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{encode_rows, sample_features, AssignmentMatrix, ConsensusGrouping};
use crate::error::{ensure_finite, Error, Result};
use crate::kmeans::{kmeans_fit, KMeansParams, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::medoid::{select_medoid, MedoidMode};
use crate::seed::{derive_u64, stream, Purpose};
use crate::Partition;

pub const DEFAULT_MAX_STEPS: usize = 100;

/// Batch size of the mini-batch variant.
pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohirfConfig {
    /// Features drawn per repetition. Ignored when `full_features` is set.
    pub q: usize,
    pub repetitions: usize,
    /// Clusters of every inner K-Means run.
    pub n_clusters: usize,
    pub medoid: MedoidMode,
    /// Count each member's own kernel term in the medoid objective.
    pub medoid_include_self: bool,
    /// When set, only this many representatives take part in each step;
    /// the rest pass through unchanged.
    pub batch_size: Option<usize>,
    /// Cluster on all features instead of random subsets.
    pub full_features: bool,
    pub seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub max_steps: usize,
}

impl CohirfConfig {
    pub fn new(q: usize, repetitions: usize, n_clusters: usize) -> Self {
        Self {
            q,
            repetitions,
            n_clusters,
            medoid: MedoidMode::AbsInnerArgmin,
            medoid_include_self: false,
            batch_size: None,
            full_features: false,
            seed: 0,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            kmeans_tol: DEFAULT_TOL,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    /// Upper end of the usual `q` range, `min(30, p - 1)`, never below 2
    /// nor above `p`.
    pub fn default_q(n_features: usize) -> usize {
        30.min(n_features.saturating_sub(1)).max(2).min(n_features)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_medoid(mut self, medoid: MedoidMode) -> Self {
        self.medoid = medoid;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = Some(batch_size);
        self
    }

    pub fn with_full_features(mut self, full: bool) -> Self {
        self.full_features = full;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if !self.full_features && (self.q < 2 || self.q > n_features) {
            return Err(Error::invalid_arg(format!(
                "q must lie in [2, {n_features}], got {}",
                self.q
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid_arg("repetitions must be at least 1"));
        }
        if self.n_clusters < 2 {
            return Err(Error::invalid_arg("n_clusters must be at least 2"));
        }
        if matches!(self.batch_size, Some(b) if b < 2) {
            return Err(Error::invalid_arg("batch size must be at least 2"));
        }
        if self.kmeans_tol.is_nan() || self.kmeans_tol < 0.0 {
            return Err(Error::invalid_arg("k-means tolerance must be nonnegative"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid_arg("max_steps must be at least 1"));
        }
        self.medoid.validate()
    }

    fn kmeans_params(&self, k: usize, step: usize, rep: usize) -> KMeansParams {
        KMeansParams {
            n_clusters: k,
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            seed: kmeans_seed(self.seed, step, rep),
        }
    }
}

/// Seed handed to the K-Means run of repetition `rep` at step `step`.
pub fn kmeans_seed(master: u64, step: usize, rep: usize) -> u64 {
    derive_u64(master, Purpose::KMeans, step as u64, rep as u64)
}

/// Everything one agglomeration step decided.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Positions (into the step's input) that took part in the consensus.
    pub active: Vec<usize>,
    /// Feature columns used by each repetition.
    pub feature_sets: Vec<Vec<usize>>,
    /// K-Means cluster count actually used.
    pub effective_clusters: usize,
    /// Label matrix over the active positions.
    pub assignment: AssignmentMatrix,
    /// Groups over the active positions (indices into `active`).
    pub grouping: ConsensusGrouping,
    /// Medoid of each group, as an index into `active`.
    pub medoids: Vec<usize>,
}

fn gather(x: ArrayView2<'_, f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| x[[rows[i], cols[j]]])
}

/// Runs one consensus step on the representatives `current` (original row
/// ids into `x`).
pub fn consensus_step(
    x: ArrayView2<'_, f64>,
    current: &[usize],
    config: &CohirfConfig,
    step: usize,
) -> Result<StepOutcome> {
    let p = x.ncols();
    let n_curr = current.len();
    let e = step as u64;

    let active: Vec<usize> = match config.batch_size {
        Some(b) if b < n_curr => {
            let mut rng = stream(config.seed, Purpose::Batch, e, 0);
            let mut idx = rand::seq::index::sample(&mut rng, n_curr, b).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n_curr).collect(),
    };
    let active_ids: Vec<usize> = active.iter().map(|&i| current[i]).collect();
    let n_active = active.len();
    let all_columns: Vec<usize> = (0..p).collect();

    // With no more points than clusters every point is its own cluster.
    let effective_clusters = config.n_clusters.min(n_active);
    let (feature_sets, columns): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        if n_active <= config.n_clusters {
            (0..config.repetitions)
                .map(|_| (Vec::new(), (0..n_active).collect()))
                .unzip()
        } else {
            let runs: Vec<Result<(Vec<usize>, Vec<usize>)>> = (0..config.repetitions)
                .into_par_iter()
                .map(|r| {
                    let features = if config.full_features {
                        all_columns.clone()
                    } else {
                        let mut rng = stream(config.seed, Purpose::FeatureSample, e, r as u64);
                        sample_features(p, config.q, &mut rng)?
                    };
                    let sub = gather(x, &active_ids, &features);
                    let fit = kmeans_fit(
                        sub.view(),
                        &config.kmeans_params(effective_clusters, step, r),
                    )?;
                    Ok((features, fit.labels))
                })
                .collect();
            runs.into_iter()
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip()
        };

    let assignment = AssignmentMatrix::from_columns(&columns)?;
    let grouping = encode_rows(&assignment);

    let bound = (config.n_clusters as u128)
        .checked_pow(config.repetitions as u32)
        .unwrap_or(u128::MAX)
        .min(n_active as u128);
    if grouping.n_groups() as u128 > bound {
        return Err(Error::Internal(format!(
            "{} consensus groups exceed the bound {bound}",
            grouping.n_groups()
        )));
    }

    let medoids: Vec<usize> = grouping
        .members
        .par_iter()
        .enumerate()
        .map(|(k, members)| {
            if members.len() == 1 {
                return Ok(members[0]);
            }
            let ids: Vec<usize> = members.iter().map(|&m| active_ids[m]).collect();
            let rows = gather(x, &ids, &all_columns);
            let mut rng = stream(config.seed, Purpose::Medoid, e, k as u64);
            let local = select_medoid(
                rows.view(),
                &config.medoid,
                config.medoid_include_self,
                &mut rng,
            )?;
            Ok(members[local])
        })
        .collect::<Result<_>>()?;

    Ok(StepOutcome {
        active,
        feature_sets,
        effective_clusters,
        assignment,
        grouping,
        medoids,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohirfResult {
    /// Final cluster of every original sample, in `0..n_clusters`.
    pub labels: Partition,
    pub n_clusters: usize,
    pub hierarchy: HierarchyTree,
    pub steps_run: usize,
    /// Representative counts `[n, n(1), ..., n(e*)]`.
    pub per_step_counts: Vec<usize>,
    /// Original sample id of each final cluster's representative.
    pub representatives: Vec<usize>,
    /// False when the step cap stopped the loop before it settled.
    pub converged: bool,
}

/// Fits the model. The mini-batch variant is selected by
/// `config.batch_size`.
pub fn cohirf_fit(x: ArrayView2<'_, f64>, config: &CohirfConfig) -> Result<CohirfResult> {
    let (n, p) = x.dim();
    if n == 0 || p == 0 {
        return Err(Error::invalid_arg(
            "data must have at least one row and one column",
        ));
    }
    config.validate(p)?;
    ensure_finite(x)?;

    let mut current: Vec<usize> = (0..n).collect();
    let mut current_nodes: Vec<usize> = (0..n).collect();
    // position of every original sample's representative in `current`
    let mut position: Vec<usize> = (0..n).collect();
    let mut tree = HierarchyTree::with_leaves(n);
    let mut counts = vec![n];
    let mut converged = false;
    let mut steps_run = 0;

    for step in 1..=config.max_steps {
        let out = consensus_step(x, &current, config, step)?;
        steps_run = step;

        // (members as positions in `current`, medoid position)
        let mut groups: Vec<(Vec<usize>, usize)> = out
            .grouping
            .members
            .iter()
            .zip(&out.medoids)
            .map(|(m, &med)| (m.iter().map(|&a| out.active[a]).collect(), out.active[med]))
            .collect();
        if out.active.len() < current.len() {
            let mut in_batch = vec![false; current.len()];
            for &a in &out.active {
                in_batch[a] = true;
            }
            groups.extend(
                (0..current.len())
                    .filter(|&i| !in_batch[i])
                    .map(|i| (vec![i], i)),
            );
            groups.sort_by_key(|(m, _)| m[0]);
        }

        let mut remap = vec![0usize; current.len()];
        let mut next = Vec::with_capacity(groups.len());
        let mut next_nodes = Vec::with_capacity(groups.len());
        for (k, (members, medoid)) in groups.iter().enumerate() {
            for &m in members {
                remap[m] = k;
            }
            let children = members.iter().map(|&m| current_nodes[m]).collect();
            next_nodes.push(tree.push(step, current[*medoid], children));
            next.push(current[*medoid]);
        }
        for pos in position.iter_mut() {
            *pos = remap[*pos];
        }

        let merged = next.len() < current.len();
        counts.push(next.len());
        current = next;
        current_nodes = next_nodes;
        if !merged {
            converged = true;
            break;
        }
    }

    tree.set_roots(current_nodes);
    Ok(CohirfResult {
        n_clusters: current.len(),
        labels: position,
        hierarchy: tree,
        steps_run,
        per_step_counts: counts,
        representatives: current,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::adjusted_rand_index;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((20, 50), |(i, _)| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            100.0 * truth[i] as f64 + noise
        });
        (x, truth)
    }

    #[test]
    fn constant_data_collapses_to_one_cluster() {
        let x = Array2::from_elem((20, 6), 3.5);
        let fit = cohirf_fit(x.view(), &CohirfConfig::new(3, 3, 2).with_seed(4)).unwrap();
        assert_eq!(fit.n_clusters, 1);
        assert!(fit.labels.iter().all(|&l| l == 0));
        assert!(fit.converged);
        assert!(fit.steps_run <= 3);
    }

    #[test]
    fn two_blobs_are_recovered() {
        let (x, truth) = two_blobs(1);
        for seed in 0..5 {
            let fit = cohirf_fit(x.view(), &CohirfConfig::new(10, 4, 2).with_seed(seed)).unwrap();
            assert_eq!(fit.n_clusters, 2);
            assert_eq!(adjusted_rand_index(&fit.labels, &truth).unwrap(), 1.0);
        }
    }

    #[test]
    fn small_batches_still_recover_two_blobs() {
        let (x, truth) = two_blobs(2);
        for seed in 0..5 {
            let config = CohirfConfig::new(10, 4, 2)
                .with_seed(seed)
                .with_batch_size(8);
            let fit = cohirf_fit(x.view(), &config).unwrap();
            assert_eq!(
                adjusted_rand_index(&fit.labels, &truth).unwrap(),
                1.0,
                "seed {seed}"
            );
            assert!(fit.per_step_counts.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn oversized_batch_matches_the_plain_fit() {
        let (x, _) = two_blobs(3);
        let base = CohirfConfig::new(5, 3, 3).with_seed(9);
        let plain = cohirf_fit(x.view(), &base).unwrap();
        let batched = cohirf_fit(x.view(), &base.clone().with_batch_size(20)).unwrap();
        assert_eq!(plain, batched);
    }

    #[test]
    fn hierarchy_agrees_with_labels() {
        let (x, _) = two_blobs(4);
        let fit = cohirf_fit(x.view(), &CohirfConfig::new(4, 2, 5).with_seed(1)).unwrap();
        fit.hierarchy.validate().unwrap();
        assert_eq!(
            reconstruct_final_clusters(&fit.hierarchy).unwrap(),
            fit.labels
        );
        assert_eq!(fit.hierarchy.roots().len(), fit.n_clusters);
        let counts = &fit.per_step_counts;
        assert_eq!(counts[counts.len() - 1], counts[counts.len() - 2]);
    }

    #[test]
    fn single_sample() {
        let x = Array2::from_elem((1, 3), 1.0);
        let fit = cohirf_fit(x.view(), &CohirfConfig::new(2, 2, 2)).unwrap();
        assert_eq!(fit.labels, vec![0]);
        assert_eq!(fit.per_step_counts, vec![1, 1]);
    }

    #[test]
    fn invalid_configs() {
        let x = Array2::from_elem((5, 3), 1.0);
        for config in [
            CohirfConfig::new(1, 2, 2),
            CohirfConfig::new(4, 2, 2),
            CohirfConfig::new(2, 0, 2),
            CohirfConfig::new(2, 2, 1),
            CohirfConfig::new(2, 2, 2).with_batch_size(1),
        ] {
            assert!(matches!(
                cohirf_fit(x.view(), &config),
                Err(Error::InvalidArgument(_))
            ));
        }
        // q is irrelevant once all features are used
        assert!(cohirf_fit(
            x.view(),
            &CohirfConfig::new(9, 2, 2).with_full_features(true)
        )
        .is_ok());
        let mut bad = x.clone();
        bad[[2, 1]] = f64::INFINITY;
        assert!(matches!(
            cohirf_fit(bad.view(), &CohirfConfig::new(2, 2, 2)),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn default_q_range() {
        assert_eq!(CohirfConfig::default_q(1000), 30);
        assert_eq!(CohirfConfig::default_q(4), 3);
        assert_eq!(CohirfConfig::default_q(2), 2);
    }
}
