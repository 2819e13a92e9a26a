//! Pair-counting agreement between two labellings: Rand Index and Adjusted
//! Rand Index (Hubert & Arabie, 1985).

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Cross-tabulation of two labellings of the same samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[i][j]`: samples in cluster `i` of the first labelling and
    /// cluster `j` of the second. Clusters are indexed by first appearance.
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

fn index_labels<T: Hash + Eq + Copy>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<T, usize> = HashMap::new();
    let idx = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (idx, ids.len())
}

impl ContingencyTable {
    pub fn new<A, B>(a: &[A], b: &[B]) -> Result<Self>
    where
        A: Hash + Eq + Copy,
        B: Hash + Eq + Copy,
    {
        if a.len() != b.len() {
            return Err(Error::invalid_arg(format!(
                "labellings differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        let (ia, ka) = index_labels(a);
        let (ib, kb) = index_labels(b);
        let mut counts = vec![vec![0u64; kb]; ka];
        for (&i, &j) in ia.iter().zip(&ib) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: a.len() as u64,
        })
    }
}

fn pairs(k: u64) -> u128 {
    let k = k as u128;
    k * k.saturating_sub(1) / 2
}

struct PairCounts {
    /// pairs together in both
    both: u128,
    /// pairs together in the first labelling
    first: u128,
    /// pairs together in the second labelling
    second: u128,
    all: u128,
}

fn pair_counts<A, B>(a: &[A], b: &[B]) -> Result<PairCounts>
where
    A: Hash + Eq + Copy,
    B: Hash + Eq + Copy,
{
    let table = ContingencyTable::new(a, b)?;
    if table.total < 2 {
        return Err(Error::invalid_arg(
            "pair-counting indices need at least two samples",
        ));
    }
    Ok(PairCounts {
        both: table.counts.iter().flatten().map(|&c| pairs(c)).sum(),
        first: table.row_sums.iter().map(|&c| pairs(c)).sum(),
        second: table.col_sums.iter().map(|&c| pairs(c)).sum(),
        all: pairs(table.total),
    })
}

/// Fraction of sample pairs on which the two labellings agree (both join
/// the pair or both split it).
pub fn rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Hash + Eq + Copy,
    B: Hash + Eq + Copy,
{
    let pc = pair_counts(a, b)?;
    // agreeing = together in both + apart in both
    let agree = pc.all + 2 * pc.both - pc.first - pc.second;
    Ok(agree as f64 / pc.all as f64)
}

/// Chance-corrected Rand Index. Returns 0 when the expected and maximal
/// index coincide, which only happens when both labellings are the same
/// trivial partition (one cluster, or all singletons).
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Hash + Eq + Copy,
    B: Hash + Eq + Copy,
{
    let pc = pair_counts(a, b)?;
    let index = pc.both as f64;
    let expected = pc.first as f64 * pc.second as f64 / pc.all as f64;
    let max = 0.5 * (pc.first + pc.second) as f64;
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((index - expected) / denom)
}
