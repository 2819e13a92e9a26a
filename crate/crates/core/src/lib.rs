//! Consensus hierarchical random-feature clustering.
//!
//! The algorithm repeatedly clusters the current set of representatives with
//! K-Means on `R` random feature subsets, merges samples that received the
//! same label in every repetition, and replaces each merged group by a medoid.
//! It stops as soon as a step produces no merge. The number of final clusters
//! is discovered, not supplied.
//!
//! ```
//! use cohirf::datagen::{SyntheticKind, SyntheticSpec};
//! use cohirf::engine::{cohirf_fit, CohirfConfig};
//! use cohirf::metrics::adjusted_rand_index;
//!
//! let spec = SyntheticSpec::new(SyntheticKind::HypercubeVertices, 200, 60, 3, 100.0, 7);
//! let (x, truth) = spec.generate().unwrap();
//! let config = CohirfConfig::new(10, 4, 3).with_seed(1);
//! let fit = cohirf_fit(x.view(), &config).unwrap();
//! assert_eq!(fit.n_clusters, 3);
//! assert_eq!(adjusted_rand_index(&fit.labels, &truth).unwrap(), 1.0);
//! ```

pub mod cli;
pub mod consensus;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod medoid;
pub mod metrics;
pub mod seed;

pub use error::{Error, Result};

/// Dense `n x p` sample matrix, one row per sample.
pub type DataMatrix = ndarray::Array2<f64>;

/// Flat cluster labelling of samples.
pub type Partition = Vec<usize>;
