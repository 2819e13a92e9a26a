//! Unanimous consensus across repeated K-Means runs.
//!
//! Each repetition contributes one column of labels. Samples are grouped
//! together only when their whole row of labels agrees.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Draws `q` distinct feature indices out of `p`, uniformly without
/// replacement, returned in ascending order.
pub fn sample_features(p: usize, q: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if q == 0 || q > p {
        return Err(Error::invalid_arg(format!(
            "cannot sample {q} features out of {p}"
        )));
    }
    let mut idx = rand::seq::index::sample(rng, p, q).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Relabels a column by order of first appearance: the first row's label
/// becomes 1, the next unseen label 2, and so on.
pub fn canonicalize_labels<T: std::hash::Hash + Eq + Copy>(column: &[T]) -> Vec<u32> {
    let mut seen: HashMap<T, u32> = HashMap::new();
    column
        .iter()
        .map(|l| {
            let next = seen.len() as u32 + 1;
            *seen.entry(*l).or_insert(next)
        })
        .collect()
}

/// `n x R` matrix of canonical (1-based) labels, stored row-major so that
/// each sample's label tuple is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    entries: Vec<u32>,
    n_samples: usize,
    n_repetitions: usize,
}

impl AssignmentMatrix {
    /// Builds the matrix from one label column per repetition, canonicalizing
    /// every column independently.
    pub fn from_columns<T: std::hash::Hash + Eq + Copy>(columns: &[Vec<T>]) -> Result<Self> {
        let n_repetitions = columns.len();
        if n_repetitions == 0 {
            return Err(Error::invalid_arg(
                "assignment matrix needs at least one column",
            ));
        }
        let n_samples = columns[0].len();
        if columns.iter().any(|c| c.len() != n_samples) {
            return Err(Error::invalid_arg("label columns differ in length"));
        }
        let mut entries = vec![0u32; n_samples * n_repetitions];
        for (r, col) in columns.iter().enumerate() {
            for (i, l) in canonicalize_labels(col).into_iter().enumerate() {
                entries[i * n_repetitions + r] = l;
            }
        }
        Ok(Self {
            entries,
            n_samples,
            n_repetitions,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_repetitions(&self) -> usize {
        self.n_repetitions
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.entries[i * self.n_repetitions..(i + 1) * self.n_repetitions]
    }

    pub fn column(&self, r: usize) -> Vec<u32> {
        (0..self.n_samples)
            .map(|i| self.entries[i * self.n_repetitions + r])
            .collect()
    }

    /// Largest label present.
    pub fn max_label(&self) -> u32 {
        self.entries.iter().copied().max().unwrap_or(0)
    }
}

/// Samples grouped by identical rows of an [`AssignmentMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusGrouping {
    /// Group id per sample, numbered by first appearance from 0.
    pub codes: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl ConsensusGrouping {
    pub fn n_groups(&self) -> usize {
        self.members.len()
    }
}

/// Assigns one code per distinct row.
pub fn encode_rows(p: &AssignmentMatrix) -> ConsensusGrouping {
    let mut index: HashMap<&[u32], usize> = HashMap::with_capacity(p.n_samples());
    let mut codes = Vec::with_capacity(p.n_samples());
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..p.n_samples() {
        let next = members.len();
        let code = *index.entry(p.row(i)).or_insert(next);
        if code == next {
            members.push(Vec::new());
        }
        members[code].push(i);
        codes.push(code);
    }
    ConsensusGrouping { codes, members }
}
