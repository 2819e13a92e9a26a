//! Representative selection for consensus groups.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Cap used by the subsampled medoid variant.
pub const DEFAULT_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MedoidMode {
    /// Member with the smallest summed absolute inner product to the others.
    #[default]
    AbsInnerArgmin,
    /// Member with the largest summed absolute inner product to the others.
    AbsInnerArgmax,
    /// `AbsInnerArgmin` evaluated on a uniform subsample of at most `cap`
    /// members.
    AbsInnerArgminCapped { cap: usize },
    /// Member with the largest summed RBF similarity `exp(-gamma * d^2)`.
    RbfArgmax { gamma: f64 },
    /// Member closest to the group mean.
    Centroid,
}

impl MedoidMode {
    /// RBF mode with `gamma = 1 / p`.
    pub fn rbf_default(n_features: usize) -> Self {
        MedoidMode::RbfArgmax {
            gamma: 1.0 / n_features.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MedoidMode::AbsInnerArgminCapped { cap: 0 } => {
                Err(Error::invalid_arg("medoid cap must be at least 1"))
            }
            MedoidMode::RbfArgmax { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::invalid_arg(format!("RBF gamma must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }
}

/// `1 / median` of the squared pairwise distances among (up to) the first
/// `max_rows` rows. Falls back to `1 / p` when every distance is zero.
pub fn median_heuristic_gamma(x: ArrayView2<'_, f64>, max_rows: usize) -> f64 {
    let m = x.nrows().min(max_rows);
    let mut d2 = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            d2.push(sq_dist(x.row(i), x.row(j)));
        }
    }
    if d2.is_empty() {
        return 1.0 / x.ncols().max(1) as f64;
    }
    let mid = d2.len() / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        1.0 / *median
    } else {
        1.0 / x.ncols().max(1) as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sums `kernel(i, j)` over `j` for every `i`, visiting each unordered pair
/// once. Terms land in each row's sum in ascending `j` order.
fn pair_sums(
    rows: &Array2<f64>,
    include_self: bool,
    kernel: impl Fn(&[f64], &[f64]) -> f64,
) -> Vec<f64> {
    let m = rows.nrows();
    let data = rows.as_slice().expect("standard layout");
    let p = rows.ncols();
    let row = |i: usize| &data[i * p..(i + 1) * p];
    let mut sums = vec![0.0; m];
    for i in 0..m {
        if include_self {
            sums[i] += kernel(row(i), row(i));
        }
        for j in i + 1..m {
            let k = kernel(row(i), row(j));
            sums[i] += k;
            sums[j] += k;
        }
    }
    sums
}

fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_rows(rows: ArrayView2<'_, f64>) -> Result<()> {
    if rows.nrows() == 0 {
        return Err(Error::invalid_arg(
            "cannot select a medoid of an empty group",
        ));
    }
    ensure_finite(rows)
}

fn centroid_member(rows: ArrayView2<'_, f64>) -> usize {
    let mean = rows.mean_axis(Axis(0)).expect("non-empty group");
    let d: Vec<f64> = rows.outer_iter().map(|r| sq_dist(r, mean.view())).collect();
    argmin(&d)
}

/// Picks a representative member of `rows` and returns its row index.
///
/// `include_self` adds each member's own kernel term to its score. Ties
/// always resolve to the lowest index. The random stream is only consumed
/// by the capped mode when it actually subsamples.
pub fn select_medoid(
    rows: ArrayView2<'_, f64>,
    mode: &MedoidMode,
    include_self: bool,
    rng: &mut impl Rng,
) -> Result<usize> {
    check_rows(rows)?;
    mode.validate()?;
    let m = rows.nrows();
    if m == 1 {
        return Ok(0);
    }
    let owned = rows.as_standard_layout().into_owned();
    let idx = match *mode {
        MedoidMode::AbsInnerArgmin => {
            argmin(&pair_sums(&owned, include_self, |a, b| dot(a, b).abs()))
        }
        MedoidMode::AbsInnerArgmax => {
            argmax(&pair_sums(&owned, include_self, |a, b| dot(a, b).abs()))
        }
        MedoidMode::AbsInnerArgminCapped { cap } => {
            if cap >= m {
                argmin(&pair_sums(&owned, include_self, |a, b| dot(a, b).abs()))
            } else {
                let mut picked = rand::seq::index::sample(rng, m, cap).into_vec();
                picked.sort_unstable();
                let sub = owned.select(Axis(0), &picked);
                picked[argmin(&pair_sums(&sub, include_self, |a, b| dot(a, b).abs()))]
            }
        }
        MedoidMode::RbfArgmax { gamma } => argmax(&pair_sums(&owned, include_self, |a, b| {
            (-gamma * sq_dist_slice(a, b)).exp()
        })),
        MedoidMode::Centroid => centroid_member(owned.view()),
    };
    Ok(idx)
}

/// Brute-force reference for [`select_medoid`]: evaluates every member's
/// objective against every other member directly. The capped mode is scored
/// on the whole group.
pub fn medoid_oracle(
    rows: ArrayView2<'_, f64>,
    mode: &MedoidMode,
    include_self: bool,
) -> Result<usize> {
    check_rows(rows)?;
    mode.validate()?;
    let m = rows.nrows();
    let score = |i: usize, kernel: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut s = 0.0;
        for j in 0..m {
            if j != i || include_self {
                s += kernel(i, j);
            }
        }
        s
    };
    let abs_inner = |i: usize, j: usize| {
        let mut acc = 0.0;
        for t in 0..rows.ncols() {
            acc += rows[[i, t]] * rows[[j, t]];
        }
        acc.abs()
    };
    let pick = |better: &dyn Fn(f64, f64) -> bool, kernel: &dyn Fn(usize, usize) -> f64| {
        let mut best = 0;
        let mut best_score = score(0, kernel);
        for i in 1..m {
            let s = score(i, kernel);
            if better(s, best_score) {
                best = i;
                best_score = s;
            }
        }
        best
    };
    Ok(match *mode {
        MedoidMode::AbsInnerArgmin | MedoidMode::AbsInnerArgminCapped { .. } => {
            pick(&|s, b| s < b, &abs_inner)
        }
        MedoidMode::AbsInnerArgmax => pick(&|s, b| s > b, &abs_inner),
        MedoidMode::RbfArgmax { gamma } => {
            let rbf = |i: usize, j: usize| {
                let mut d2 = 0.0;
                for t in 0..rows.ncols() {
                    let diff = rows[[i, t]] - rows[[j, t]];
                    d2 += diff * diff;
                }
                (-gamma * d2).exp()
            };
            pick(&|s, b| s > b, &rbf)
        }
        MedoidMode::Centroid => {
            let p = rows.ncols();
            let mut mean = vec![0.0; p];
            for i in 0..m {
                for t in 0..p {
                    mean[t] += rows[[i, t]];
                }
            }
            for v in &mut mean {
                *v /= m as f64;
            }
            let dist = |i: usize| {
                (0..p)
                    .map(|t| (rows[[i, t]] - mean[t]).powi(2))
                    .sum::<f64>()
            };
            let mut best = 0;
            for i in 1..m {
                if dist(i) < dist(best) {
                    best = i;
                }
            }
            best
        }
    })
}
