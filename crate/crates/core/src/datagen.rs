//! Seeded simulation designs.
//!
//! Draw order is part of the contract so that other implementations can
//! reproduce a dataset from its recipe: matrices are filled row by row, and
//! the blocks are drawn in the order they are listed on each generator.

use std::sync::Arc;

use nalgebra::SVD;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{self, Rng};
use crate::solvers::ProblemInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Recipe {
    /// Gaussian singular vectors, singular values `9 j^{-8}`.
    Example1 { n: usize, p: usize, seed: u64 },
    /// `A = P D Q^T + alpha M`, `D_ii = (1 - (i-1)/p)^i`, response noise `gamma`.
    Example2 {
        n: usize,
        p: usize,
        alpha: f64,
        gamma: f64,
        seed: u64,
    },
}

impl Recipe {
    pub fn generate(&self, lambda: f64) -> Result<SyntheticDataset> {
        match *self {
            Recipe::Example1 { n, p, seed } => gen_example1(n, p, lambda, seed),
            Recipe::Example2 {
                n,
                p,
                alpha,
                gamma,
                seed,
            } => gen_example2(n, p, alpha, gamma, lambda, seed),
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            Recipe::Example1 { seed, .. } | Recipe::Example2 { seed, .. } => seed,
        }
    }

    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            Recipe::Example1 { seed, .. } | Recipe::Example2 { seed, .. } => *seed = new_seed,
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub instance: ProblemInstance,
    pub beta_true: Vector,
    pub recipe: Recipe,
}

fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn gaussian_vector(rng: &mut Rng, len: usize) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

fn check_shape(n: usize, p: usize) -> Result<()> {
    if n == 0 || n > p {
        return Err(Error::InvalidArgument(format!(
            "simulation designs need 1 <= n <= p, got n={n}, p={p}"
        )));
    }
    Ok(())
}

/// `sigma_j = 9 j^{-8}` for `j = 1..=n`.
pub fn example1_spectrum(n: usize) -> Vec<f64> {
    (1..=n).map(|j| 9.0 * (j as f64).powi(-8)).collect()
}

/// Draws `B` (`n x p`), then `beta` (`p`), then the noise (`n`).
/// `A = U_B diag(9 j^{-8}) V_B^T` and `y = A beta + noise`.
pub fn gen_example1(n: usize, p: usize, lambda: f64, seed: u64) -> Result<SyntheticDataset> {
    check_shape(n, p)?;
    let mut g = rng::seeded(seed);
    let b = gaussian_matrix(&mut g, n, p);
    let beta = gaussian_vector(&mut g, p);
    let noise = gaussian_vector(&mut g, n);

    let svd = SVD::new(b, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    // pair the prescribed spectrum with B's singular vectors in B's own
    // descending order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let mut us = Matrix::zeros(n, n);
    let mut vt = Matrix::zeros(n, p);
    for (k, (&j, s)) in order.iter().zip(example1_spectrum(n)).enumerate() {
        us.set_column(k, &(u.column(j) * s));
        vt.set_row(k, &v_t.row(j));
    }
    let a = us * vt;
    let y = &a * &beta + noise;
    Ok(SyntheticDataset {
        instance: ProblemInstance::new(a, y, lambda)?,
        beta_true: beta,
        recipe: Recipe::Example1 { n, p, seed },
    })
}

/// `D_ii = (1 - (i-1)/p)^i` for `i = 1..=n`.
pub fn example2_diagonal(n: usize, p: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| (1.0 - (i as f64 - 1.0) / p as f64).powi(i as i32))
        .collect()
}

/// Column-orthonormal `Q` from a QR factorization of `g`, with signs fixed so
/// that `R` has a non-negative diagonal.
fn orthonormal_columns(g: Matrix) -> Matrix {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Draws `P` (`n x n`), the Gaussian seed of `Q` (`p x n`), `M` (`n x p`),
/// then `beta` (`p`) and the noise (`n`).
/// `A = P D Q^T + alpha M` and `y = A beta + gamma * noise`.
pub fn gen_example2(n: usize, p: usize, alpha: f64, gamma: f64, lambda: f64, seed: u64) -> Result<SyntheticDataset> {
    check_shape(n, p)?;
    if !(alpha > 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need alpha > 0 and gamma >= 0, got alpha={alpha}, gamma={gamma}"
        )));
    }
    let mut g = rng::seeded(seed);
    let pm = gaussian_matrix(&mut g, n, n);
    let q_seed = gaussian_matrix(&mut g, p, n);
    let noise_m = gaussian_matrix(&mut g, n, p);
    let beta = gaussian_vector(&mut g, p);
    let noise = gaussian_vector(&mut g, n);

    let q = orthonormal_columns(q_seed);
    let mut pd = pm;
    for (j, d) in example2_diagonal(n, p).into_iter().enumerate() {
        pd.column_mut(j).scale_mut(d);
    }
    let a = pd * q.transpose() + noise_m * alpha;
    let y = &a * &beta + noise * gamma;
    Ok(SyntheticDataset {
        instance: ProblemInstance::new(Arc::new(a), y, lambda)?,
        beta_true: beta,
        recipe: Recipe::Example2 {
            n,
            p,
            alpha,
            gamma,
            seed,
        },
    })
}
