//! Dense kernels used by the dual-space solvers.
//!
//! Everything here works on `nalgebra` dense matrices. Features are the
//! columns of the `n x p` design, so column-major storage makes gathering a
//! subset of features a contiguous copy. The sampling matrix `S` is never
//! formed: [`sampled_gram`] gathers the `r` drawn columns, already scaled by
//! `1/sqrt(r * pi)`, into an `n x r` buffer and takes its outer product.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};

use crate::error::{Error, Result};
use crate::sampling::SamplingPlan;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Returns an error naming the first non-finite entry, if any.
pub fn ensure_finite(a: &Matrix) -> Result<()> {
    for (j, col) in a.column_iter().enumerate() {
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

/// Squared Euclidean norm of every column.
pub fn column_norms_sq(a: &Matrix) -> Vec<f64> {
    a.column_iter().map(|c| c.norm_squared()).collect()
}

/// Symmetric `n x n` matrix of the form `A A^T + lambda I` (or its sampled
/// analogue).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Matrix);

impl GramMatrix {
    /// Wraps an arbitrary square matrix after checking symmetry to `1e-12`
    /// relative to its largest entry.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "Gram matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        ensure_finite(&m)?;
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "Gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Cholesky factor of a [`GramMatrix`], reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &GramMatrix) -> Result<Self> {
        Cholesky::new(m.0.clone())
            .map(|chol| Self { chol })
            .ok_or(Error::NotPositiveDefinite)
    }

    pub fn order(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        if b.len() != self.order() {
            return Err(Error::Dimension(format!(
                "right-hand side has length {}, matrix has order {}",
                b.len(),
                self.order()
            )));
        }
        Ok(self.chol.solve(b))
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.nrows() != self.order() {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, matrix has order {}",
                b.nrows(),
                self.order()
            )));
        }
        Ok(self.chol.solve(b))
    }

    /// Explicit inverse, symmetrized.
    pub fn inverse(&self) -> Matrix {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn spd_solve(m: &GramMatrix, b: &Vector) -> Result<Vector> {
    SpdFactor::new(m)?.solve(b)
}

/// Solves `M X = B` column by column.
pub fn spd_solve_matrix(m: &GramMatrix, b: &Matrix) -> Result<Matrix> {
    SpdFactor::new(m)?.solve_matrix(b)
}

/// Copies the lower triangle onto the upper one.
fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

fn shifted_outer(g: &Matrix, lambda: f64) -> GramMatrix {
    let n = g.nrows();
    let mut m = g * g.transpose();
    symmetrize(&mut m);
    for i in 0..n {
        m[(i, i)] += lambda;
    }
    GramMatrix(m)
}

/// `A A^T + lambda I`.
pub fn gram(a: &Matrix, lambda: f64) -> Result<GramMatrix> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(shifted_outer(a, lambda))
}

/// Gathers the drawn columns of `a`, each scaled by its plan weight, into an
/// `n x r` buffer.
pub fn gather_scaled_columns(a: &Matrix, plan: &SamplingPlan) -> Result<Matrix> {
    let p = a.ncols();
    if plan.probs().len() != p {
        return Err(Error::MalformedPlan(format!(
            "plan is over {} features, design has {p}",
            plan.probs().len()
        )));
    }
    let mut g = Matrix::zeros(a.nrows(), plan.draws().len());
    for (t, (&i, &w)) in plan.draws().iter().zip(plan.weights()).enumerate() {
        if i >= p {
            return Err(Error::MalformedPlan(format!(
                "draw {t} selects feature {i}, design has {p}"
            )));
        }
        let pi = plan.probs().as_slice()[i];
        if !(pi > 0.0) {
            return Err(Error::MalformedPlan(format!(
                "draw {t} selects feature {i} which has zero probability"
            )));
        }
        g.column_mut(t).zip_apply(&a.column(i), |dst, src| *dst = w * src);
    }
    Ok(g)
}

/// `(1/r) sum_t A_{i_t} A_{i_t}^T / pi_{i_t} + lambda I` for the columns drawn
/// by `plan`. `lambda = 0` is accepted so the bare sketch can be inspected.
pub fn sampled_gram(a: &Matrix, plan: &SamplingPlan, lambda: f64) -> Result<GramMatrix> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let g = gather_scaled_columns(a, plan)?;
    Ok(shifted_outer(&g, lambda))
}

/// Thin SVD `A = U diag(sigma) V^T` truncated at the numerical rank.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `n x rank`
    pub u: Matrix,
    /// Descending, all strictly positive.
    pub singular_values: Vec<f64>,
    /// `p x rank`
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `||V^i||^2` for every feature `i`; these sum to the rank.
    pub fn leverage_scores(&self) -> Vec<f64> {
        self.v.row_iter().map(|r| r.norm_squared()).collect()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD with rank cut at `max(n, p) * eps * sigma_1`.
pub fn thin_svd(a: &Matrix) -> Result<SvdFactors> {
    let (n, p) = a.shape();
    if n == 0 || p == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    ensure_finite(a)?;
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let sigma_max = svd.singular_values[order[0]];
    if !(sigma_max > 0.0) {
        return Err(Error::ZeroRank);
    }
    let tol = n.max(p) as f64 * f64::EPSILON * sigma_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| svd.singular_values[j] > tol)
        .collect();

    let rank = kept.len();
    let mut u_out = Matrix::zeros(n, rank);
    let mut v_out = Matrix::zeros(p, rank);
    let mut sigma = Vec::with_capacity(rank);
    for (k, &j) in kept.iter().enumerate() {
        u_out.set_column(k, &u.column(j));
        v_out.set_column(k, &v_t.row(j).transpose());
        sigma.push(svd.singular_values[j]);
    }
    Ok(SvdFactors {
        u: u_out,
        singular_values: sigma,
        v: v_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{ProbabilityVector, SamplingPlan};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked() -> Matrix {
        Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn spd_solve_examples() {
        let m = GramMatrix::from_matrix(Matrix::identity(2, 2) * 2.0).unwrap();
        let x = spd_solve(&m, &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(x.as_slice(), &[0.5, 0.5][..], epsilon = 1e-15);

        let m = GramMatrix::from_matrix(Matrix::identity(2, 2)).unwrap();
        let x = spd_solve(&m, &Vector::from_vec(vec![3.0, -4.0])).unwrap();
        assert_abs_diff_eq!(x.as_slice(), &[3.0, -4.0][..], epsilon = 1e-15);

        // elimination: 2x + y = 1, x + 2y = 1
        let m = GramMatrix::from_matrix(Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let x = spd_solve(&m, &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(x.as_slice(), &[1.0 / 3.0, 1.0 / 3.0][..], epsilon = 1e-15);
    }

    #[test]
    fn spd_solve_errors() {
        let m = GramMatrix::from_matrix(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(
            spd_solve(&m, &Vector::from_vec(vec![1.0, 1.0])),
            Err(Error::NotPositiveDefinite)
        ));
        let m = GramMatrix::from_matrix(Matrix::identity(2, 2)).unwrap();
        assert!(matches!(
            spd_solve(&m, &Vector::from_vec(vec![1.0, 1.0, 1.0])),
            Err(Error::Dimension(_))
        ));
        assert!(GramMatrix::from_matrix(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
    }

    #[test]
    fn spd_solve_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 8, 25);
            let m = gram(&a, 0.7).unwrap();
            let b = Vector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
            let x = spd_solve(&m, &b).unwrap();
            assert!((m.as_matrix() * &x - &b).norm() <= 1e-8 * b.norm());
        }
    }

    #[test]
    fn gram_examples() {
        let g = gram(&worked(), 1.0).unwrap();
        assert_eq!(g.as_matrix(), &(Matrix::identity(2, 2) * 2.0));

        let g = gram(&Matrix::zeros(2, 3), 0.5).unwrap();
        assert_eq!(g.as_matrix(), &(Matrix::identity(2, 2) * 0.5));

        let g = gram(&Matrix::from_row_slice(2, 1, &[1.0, 1.0]), 1.0).unwrap();
        assert_eq!(g.as_matrix(), &Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));

        assert!(gram(&worked(), 0.0).is_err());
        assert!(gram(&worked(), -1.0).is_err());
    }

    #[test]
    fn sampled_gram_examples() {
        let probs = ProbabilityVector::custom(vec![0.5, 0.5, 0.0]).unwrap();
        let plan = SamplingPlan::from_draws(probs.clone(), vec![0, 1], 0).unwrap();
        let g = sampled_gram(&worked(), &plan, 1.0).unwrap();
        assert_abs_diff_eq!(g.as_matrix(), gram(&worked(), 1.0).unwrap().as_matrix(), epsilon = 1e-15);

        let plan = SamplingPlan::from_draws(probs, vec![0, 0], 0).unwrap();
        let g = sampled_gram(&worked(), &plan, 0.0).unwrap();
        assert_abs_diff_eq!(
            g.as_matrix(),
            &Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn sampled_gram_rejects_malformed_plans() {
        let probs = ProbabilityVector::custom(vec![0.5, 0.5, 0.0]).unwrap();
        // bypass from_draws validation to hit the gather checks
        let plan = SamplingPlan::from_parts_unchecked(probs.clone(), vec![2], vec![1.0], 0);
        assert!(matches!(
            sampled_gram(&worked(), &plan, 1.0),
            Err(Error::MalformedPlan(_))
        ));
        let plan = SamplingPlan::from_parts_unchecked(probs.clone(), vec![7], vec![1.0], 0);
        assert!(matches!(
            sampled_gram(&worked(), &plan, 1.0),
            Err(Error::MalformedPlan(_))
        ));
        let plan = SamplingPlan::from_draws(probs, vec![0], 0).unwrap();
        let wide = Matrix::zeros(2, 4);
        assert!(sampled_gram(&wide, &plan, 1.0).is_err());
    }

    #[test]
    fn sampled_gram_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 5, 100);
        let exact = &a * a.transpose();
        let probs = ProbabilityVector::uniform(100).unwrap();
        let reps = 4000;
        let mut acc = Matrix::zeros(5, 5);
        for rep in 0..reps {
            let plan = crate::sampling::draw_plan(&probs, 50, 1000 + rep).unwrap();
            acc += sampled_gram(&a, &plan, 0.0).unwrap().into_matrix();
        }
        acc /= reps as f64;
        let rel = (acc - &exact).norm() / exact.norm();
        assert!(rel < 0.05, "relative distance {rel}");
    }

    #[test]
    fn push_through_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..=10);
            let p = rng.random_range(1..=30);
            let lambda = rng.random_range(0.1..5.0);
            let a = random_matrix(&mut rng, n, p);
            let y = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let dual = a.transpose() * spd_solve(&gram(&a, lambda).unwrap(), &y).unwrap();
            let primal_m = GramMatrix::from_matrix(gram(&a.transpose(), lambda).unwrap().into_matrix()).unwrap();
            let primal = spd_solve(&primal_m, &(a.transpose() * &y)).unwrap();
            assert!((dual - primal).amax() <= 1e-8);
        }
    }

    #[test]
    fn thin_svd_examples() {
        let s = thin_svd(&worked()).unwrap();
        assert_eq!(s.rank(), 2);
        assert_abs_diff_eq!(s.singular_values.as_slice(), &[1.0, 1.0][..], epsilon = 1e-14);

        let s = thin_svd(&Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(s.rank(), 1);
        assert_abs_diff_eq!(s.singular_values[0], 3.0, epsilon = 1e-14);

        // [[1,1],[1,1]] = 2 * (1,1)/sqrt2 (1,1)^T/sqrt2
        let s = thin_svd(&Matrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(s.rank(), 1);
        assert_abs_diff_eq!(s.singular_values[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.leverage_scores().as_slice(), &[0.5, 0.5][..], epsilon = 1e-14);

        assert!(matches!(thin_svd(&Matrix::zeros(2, 3)), Err(Error::ZeroRank)));
        let mut bad = worked();
        bad[(1, 2)] = f64::NAN;
        assert!(matches!(thin_svd(&bad), Err(Error::NonFinite { row: 1, col: 2 })));
    }

    #[test]
    fn thin_svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.random_range(1..=12);
            let p = rng.random_range(1..=40);
            let a = random_matrix(&mut rng, n, p);
            let s = thin_svd(&a).unwrap();
            assert!((s.reconstruct() - &a).norm() <= 1e-9 * a.norm());
            let k = s.rank();
            assert!((s.u.transpose() * &s.u - Matrix::identity(k, k)).amax() <= 1e-10);
            assert!((s.v.transpose() * &s.v - Matrix::identity(k, k)).amax() <= 1e-10);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let lev: f64 = s.leverage_scores().iter().sum();
            assert_abs_diff_eq!(lev, k as f64, epsilon = 1e-9);
        }
    }
}
