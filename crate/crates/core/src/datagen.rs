//! Synthetic benchmark data with known labels.
//!
//! Two generators are provided. `HypercubeVertices` puts cluster centers on
//! distinct random vertices of `{0, delta}^p`. `SeparatedGaussians` puts
//! them on a randomly rotated regular simplex whose edges all have length
//! `delta`. Samples are unit-variance isotropic Gaussians around their
//! center, split evenly across clusters and returned in shuffled order.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream, Purpose};
use crate::{DataMatrix, Partition};

/// Grid of sizes used for the scalability runs.
pub const SCALE_GRID: [usize; 6] = [100, 347, 1202, 4163, 14427, 50000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    HypercubeVertices,
    SeparatedGaussians,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub p: usize,
    /// Number of true clusters.
    pub k: usize,
    /// Hypercube edge length, or pairwise center distance for the simplex.
    pub delta: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, p: usize, k: usize, delta: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            p,
            k,
            delta,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::invalid_arg(format!(
                "need n >= k >= 1, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.p == 0 {
            return Err(Error::invalid_arg("p must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid_arg("delta must be positive"));
        }
        Ok(())
    }

    pub fn centers(&self) -> Result<Array2<f64>> {
        self.validate()?;
        let mut rng = stream(self.seed, Purpose::Generator, 0, 0);
        match self.kind {
            SyntheticKind::HypercubeVertices => hypercube_centers(self, &mut rng),
            SyntheticKind::SeparatedGaussians => simplex_centers(self, &mut rng),
        }
    }

    pub fn generate(&self) -> Result<(DataMatrix, Partition)> {
        let centers = self.centers()?;
        let mut rng = stream(self.seed, Purpose::Generator, 1, 0);
        let mut labels: Vec<usize> = (0..self.n).map(|i| i % self.k).collect();
        labels.shuffle(&mut rng);
        let mut x = Array2::zeros((self.n, self.p));
        for (mut row, &l) in x.outer_iter_mut().zip(&labels) {
            for (v, &c) in row.iter_mut().zip(centers.row(l)) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = c + z;
            }
        }
        Ok((x, labels))
    }
}

pub fn gen_hypercube(spec: &SyntheticSpec) -> Result<(DataMatrix, Partition)> {
    if spec.kind != SyntheticKind::HypercubeVertices {
        return Err(Error::invalid_arg("spec is not a hypercube spec"));
    }
    spec.generate()
}

pub fn gen_separated_gaussians(spec: &SyntheticSpec) -> Result<(DataMatrix, Partition)> {
    if spec.kind != SyntheticKind::SeparatedGaussians {
        return Err(Error::invalid_arg("spec is not a separated-Gaussians spec"));
    }
    spec.generate()
}

fn hypercube_centers(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    if spec.p < 64 && (1u64 << spec.p) < spec.k as u64 {
        return Err(Error::invalid_arg(format!(
            "a {}-dimensional hypercube has fewer than {} vertices",
            spec.p, spec.k
        )));
    }
    let mut seen: HashSet<Vec<bool>> = HashSet::with_capacity(spec.k);
    let mut vertices = Vec::with_capacity(spec.k);
    while vertices.len() < spec.k {
        let v: Vec<bool> = (0..spec.p).map(|_| rng.random()).collect();
        if seen.insert(v.clone()) {
            vertices.push(v);
        }
    }
    Ok(Array2::from_shape_fn((spec.k, spec.p), |(c, j)| {
        if vertices[c][j] {
            spec.delta
        } else {
            0.0
        }
    }))
}

fn simplex_centers(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let k = spec.k;
    if spec.p + 1 < k {
        return Err(Error::invalid_arg(format!(
            "{k} equidistant centers need at least {} dimensions, got {}",
            k - 1,
            spec.p
        )));
    }
    if k == 1 {
        return Ok(Array2::zeros((1, spec.p)));
    }
    // Vertices (delta / sqrt 2) * e_i, expressed in the Helmert basis of the
    // hyperplane orthogonal to the all-ones vector.
    let dim = k - 1;
    let scale = spec.delta / std::f64::consts::SQRT_2;
    let simplex = Array2::from_shape_fn((k, dim), |(i, j)| {
        let j1 = (j + 1) as f64;
        let norm = (j1 * (j1 + 1.0)).sqrt();
        let h = if i <= j {
            1.0
        } else if i == j + 1 {
            -j1
        } else {
            0.0
        };
        scale * h / norm
    });
    let frame = random_orthonormal_columns(spec.p, dim, rng);
    Ok(simplex.dot(&frame.t()))
}

/// `p x d` matrix with orthonormal columns, from Gram-Schmidt on a Gaussian
/// matrix.
fn random_orthonormal_columns(p: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((p, d));
    let mut j = 0;
    while j < d {
        let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for c in 0..j {
                let col = q.column(c);
                let proj: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(col.iter()) {
                    *vi -= proj * ci;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for (qi, vi) in q.column_mut(j).iter_mut().zip(&v) {
            *qi = vi / norm;
        }
        j += 1;
    }
    q
}
