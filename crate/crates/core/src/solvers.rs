//! Dual-space ridge solvers.
//!
//! All estimators work with the `n`-dimensional dual variable
//! `z = lambda (A A^T + lambda I)^{-1} y` and recover the primal coefficients
//! through `beta = A^T z / lambda`:
//!
//! * [`ridge_exact`] forms the full Gram matrix, `O(n^2 p + n^3)`.
//! * [`rshrr`] replaces the Gram matrix by a column-subsampled estimate,
//!   `O(n^2 r + n^3 + n p)`.
//! * [`two_step`] draws a cheap pilot sketch once, then repeatedly solves the
//!   dual residual system with freshly drawn near-optimal sketches.

use std::fmt;
use std::sync::Arc;
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms_sq, gather_scaled_columns, gram, sampled_gram, Matrix, SpdFactor, Vector};
use crate::rng::derive_seed;
use crate::sampling::{
    draw_plan, probs_coefficient_weighted_with_norms, probs_column, probs_rsis, ProbabilityVector, SamplingPlan,
    Scheme,
};

/// Design matrix, response and regularizer.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a: Arc<Matrix>,
    y: Vector,
    lambda: f64,
}

impl ProblemInstance {
    pub fn new(a: impl Into<Arc<Matrix>>, y: Vector, lambda: f64) -> Result<Self> {
        let a = a.into();
        let (n, p) = a.shape();
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!("design must be non-empty, got {n}x{p}")));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!("response has length {}, design has {n} rows", y.len())));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        crate::linalg::ensure_finite(&a)?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        if p <= n {
            log::warn!("p = {p} <= n = {n}: column subsampling gives no savings here");
        }
        Ok(Self { a, y, lambda })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn shared_a(&self) -> Arc<Matrix> {
        Arc::clone(&self.a)
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    /// Same design, different response.
    pub fn with_response(&self, y: Vector) -> Result<Self> {
        Self::new(self.shared_a(), y, self.lambda)
    }

    /// Same design and response, different regularizer.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.shared_a(), self.y.clone(), lambda)
    }
}

/// Which estimator produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "scheme", rename_all = "snake_case")]
pub enum SolveMethod {
    Exact,
    Sketched(Scheme),
    Iterative(Scheme),
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMethod::Exact => f.write_str("exact"),
            SolveMethod::Sketched(s) => write!(f, "rshrr-{s}"),
            SolveMethod::Iterative(s) => write!(f, "iterative-{s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub z: Vector,
    pub beta: Vector,
    pub lambda: f64,
    pub method: SolveMethod,
    pub plan_seed: Option<u64>,
}

fn recover_beta(a: &Matrix, z: &Vector, lambda: f64) -> Vector {
    a.tr_mul(z) / lambda
}

/// Exact dual solve, kept factored so further right-hand sides are cheap.
#[derive(Debug, Clone)]
pub struct ExactDual {
    factor: SpdFactor,
    lambda: f64,
}

impl ExactDual {
    pub fn new(a: &Matrix, lambda: f64) -> Result<Self> {
        Ok(Self {
            factor: SpdFactor::new(&gram(a, lambda)?)?,
            lambda,
        })
    }

    /// `lambda (A A^T + lambda I)^{-1} rhs`
    pub fn dual(&self, rhs: &Vector) -> Result<Vector> {
        Ok(self.factor.solve(rhs)? * self.lambda)
    }

    /// `(A A^T + lambda I)^{-1}`
    pub fn inverse(&self) -> Matrix {
        self.factor.inverse()
    }
}

/// `z* = lambda (A A^T + lambda I)^{-1} y`, `beta = A^T z* / lambda`.
pub fn ridge_exact(inst: &ProblemInstance) -> Result<RidgeSolution> {
    let z = ExactDual::new(inst.a(), inst.lambda)?.dual(inst.y())?;
    let beta = recover_beta(inst.a(), &z, inst.lambda);
    Ok(RidgeSolution {
        z,
        beta,
        lambda: inst.lambda,
        method: SolveMethod::Exact,
        plan_seed: None,
    })
}

fn sketched_dual(a: &Matrix, rhs: &Vector, lambda: f64, plan: &SamplingPlan) -> Result<Vector> {
    let m = sampled_gram(a, plan, lambda)?;
    Ok(SpdFactor::new(&m)?.solve(rhs)? * lambda)
}

/// One column-subsampled solve: `z = lambda (A S S^T A^T + lambda I)^{-1} y`.
pub fn rshrr(inst: &ProblemInstance, plan: &SamplingPlan) -> Result<RidgeSolution> {
    let z = sketched_dual(inst.a(), inst.y(), inst.lambda, plan)?;
    let beta = recover_beta(inst.a(), &z, inst.lambda);
    Ok(RidgeSolution {
        z,
        beta,
        lambda: inst.lambda,
        method: SolveMethod::Sketched(plan.probs().scheme()),
        plan_seed: Some(plan.seed()),
    })
}

/// The pilot sketch of the two-step algorithm.
#[derive(Debug, Clone)]
pub struct Pilot {
    /// `(A* A*^T + lambda I)^{-1}`, symmetric positive definite.
    pub c: Matrix,
    pub plan: SamplingPlan,
}

/// Draws `r0` columns by column-norm sampling and inverts the resulting
/// sketched Gram matrix once.
pub fn pilot_preconditioner(inst: &ProblemInstance, r0: usize, seed: u64) -> Result<Pilot> {
    let probs = probs_column(inst.a())?;
    let plan = draw_plan(&probs, r0, seed)?;
    Ok(Pilot {
        c: pilot_inverse(inst.a(), &plan, inst.lambda)?,
        plan,
    })
}

fn pilot_inverse(a: &Matrix, plan: &SamplingPlan, lambda: f64) -> Result<Matrix> {
    let a_star = gather_scaled_columns(a, plan)?;
    let m = gram(&a_star, lambda)?;
    Ok(SpdFactor::new(&m)?.inverse())
}

/// How each refinement iteration picks its sampling probabilities.
#[derive(Debug, Clone)]
pub enum ProbabilityRule {
    /// The same distribution every iteration (UNI, COL, LEV, RLEV, custom).
    Fixed(ProbabilityVector),
    /// Probabilities recomputed each iteration from `beta~ = A^T C b_t`,
    /// weighted as OPL/NOPL (`|beta~_i| ||A_i||`) or RSIS (`|beta~_i|`).
    /// With `C` the pilot inverse this is NOPL; with the exact inverse it is
    /// OPL (or RSIS) on the current residual.
    Refreshed { c: Arc<Matrix>, scheme: Scheme },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeConfig {
    /// Per-iteration sample size.
    pub r: usize,
    /// Pilot sample size.
    pub r0: usize,
    /// Number of refinement iterations.
    pub m: usize,
    pub seed: u64,
    /// Uniform mixing weight in `[0, 1)`, applied to refreshed probabilities.
    #[serde(default)]
    pub mixing_floor: f64,
}

impl IterativeConfig {
    pub fn new(r: usize, r0: usize, m: usize, seed: u64) -> Self {
        Self {
            r,
            r0,
            m,
            seed,
            mixing_floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r0 == 0 || self.m == 0 {
            return Err(Error::InvalidArgument(format!(
                "r, r0 and m must all be at least 1 (got r={}, r0={}, m={})",
                self.r, self.r0, self.m
            )));
        }
        if !(0.0..1.0).contains(&self.mixing_floor) {
            return Err(Error::InvalidArgument(format!(
                "mixing floor must lie in [0, 1), got {}",
                self.mixing_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `||b_t||_2`
    pub residual_norm: f64,
    /// Relative error of `beta_t` against the reference solution, if given.
    pub estimation_error: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iterations: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn errors(&self) -> Option<Vec<f64>> {
        self.iterations.iter().map(|r| r.estimation_error).collect()
    }
}

/// Knobs for [`refine`] that are not part of the algorithm's inputs.
#[derive(Debug, Clone, Default)]
pub struct RefineOptions<'a> {
    /// Exact solution; when present every iteration records its error.
    pub reference: Option<&'a RidgeSolution>,
    /// Starting dual iterate (zero when absent).
    pub initial_z: Option<Vector>,
    pub mixing_floor: f64,
}

/// Residual refinement `z_t = z_{t-1} + w_t`, where `w_t` solves the dual
/// residual system with a fresh sketch of size `r` drawn per `rule`.
///
/// Iteration `t` draws its plan from seed `derive_seed(seed, "iter/{t}")`.
pub fn refine(
    inst: &ProblemInstance,
    rule: &ProbabilityRule,
    r: usize,
    m: usize,
    seed: u64,
    opts: &RefineOptions<'_>,
) -> Result<(RidgeSolution, IterationTrace)> {
    if r == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("r and m must be at least 1 (got r={r}, m={m})")));
    }
    let (a, y, lambda) = (inst.a(), inst.y(), inst.lambda);
    let n = inst.n();
    let mut z = match &opts.initial_z {
        Some(z0) if z0.len() != n => {
            return Err(Error::Dimension(format!("initial dual has length {}, expected {n}", z0.len())))
        }
        Some(z0) => z0.clone(),
        None => Vector::zeros(n),
    };
    let col_norms: Vec<f64> = match rule {
        ProbabilityRule::Refreshed { .. } => column_norms_sq(a).into_iter().map(f64::sqrt).collect(),
        ProbabilityRule::Fixed(_) => Vec::new(),
    };
    if let ProbabilityRule::Fixed(pv) = rule {
        if pv.len() != inst.p() {
            return Err(Error::Dimension(format!(
                "probabilities over {} features, design has {}",
                pv.len(),
                inst.p()
            )));
        }
    }
    let scheme = match rule {
        ProbabilityRule::Fixed(pv) => pv.scheme(),
        ProbabilityRule::Refreshed { scheme, .. } => *scheme,
    };

    let mut trace = IterationTrace::default();
    for t in 1..=m {
        let started = Instant::now();
        // b_t = y - A beta_{t-1} - z_{t-1}, with beta_{t-1} = A^T z_{t-1} / lambda
        let beta_prev = recover_beta(a, &z, lambda);
        let b = y - a * &beta_prev - &z;
        let residual_norm = b.norm();

        if b.iter().any(|v| *v != 0.0) {
            let probs = match rule {
                ProbabilityRule::Fixed(pv) => pv.clone(),
                ProbabilityRule::Refreshed { c, scheme } => {
                    // beta~ = A^T (lambda C b) / lambda
                    let beta_tilde = a.tr_mul(&(c.as_ref() * &b));
                    refreshed_probs(&col_norms, beta_tilde.as_slice(), *scheme, opts.mixing_floor, t)?
                }
            };
            let plan = draw_plan(&probs, r, derive_seed(seed, &format!("iter/{t}")))?;
            z += sketched_dual(a, &b, lambda, &plan)?;
        }

        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let estimation_error = match opts.reference {
            Some(exact) => Some(relative_error(&recover_beta(a, &z, lambda), &exact.beta)),
            None => None,
        };
        trace.iterations.push(IterationRecord {
            iteration: t,
            residual_norm,
            estimation_error,
            wall_ms,
        });
    }

    let beta = recover_beta(a, &z, lambda);
    Ok((
        RidgeSolution {
            z,
            beta,
            lambda,
            method: SolveMethod::Iterative(scheme),
            plan_seed: Some(seed),
        },
        trace,
    ))
}

fn refreshed_probs(
    col_norms: &[f64],
    coef: &[f64],
    scheme: Scheme,
    floor: f64,
    iteration: usize,
) -> Result<ProbabilityVector> {
    let weighted = match scheme {
        Scheme::Rsis => probs_rsis(coef),
        _ => probs_coefficient_weighted_with_norms(col_norms, coef, scheme),
    };
    match weighted {
        Ok(pv) => pv.with_uniform_floor(floor),
        Err(Error::InvalidArgument(_)) if floor > 0.0 => {
            let pv = ProbabilityVector::uniform(coef.len())?;
            ProbabilityVector::from_weights(pv.as_slice().to_vec(), scheme)
        }
        Err(Error::InvalidArgument(_)) => Err(Error::DegenerateWeights { iteration }),
        Err(e) => Err(e),
    }
}

fn relative_error(estimate: &Vector, exact: &Vector) -> f64 {
    (estimate - exact).norm() / exact.norm()
}

/// The two-step algorithm: column-norm pilot of size `r0`, then `m` NOPL
/// refinement iterations of size `r`.
pub fn two_step(inst: &ProblemInstance, cfg: &IterativeConfig) -> Result<(RidgeSolution, IterationTrace)> {
    two_step_with(inst, cfg, None, None)
}

/// [`two_step`] with an optional reference solution for the trace and an
/// optional starting dual iterate.
pub fn two_step_with(
    inst: &ProblemInstance,
    cfg: &IterativeConfig,
    reference: Option<&RidgeSolution>,
    initial_z: Option<Vector>,
) -> Result<(RidgeSolution, IterationTrace)> {
    cfg.validate()?;
    let pilot = pilot_preconditioner(inst, cfg.r0, derive_seed(cfg.seed, "pilot"))?;
    let rule = ProbabilityRule::Refreshed {
        c: Arc::new(pilot.c),
        scheme: Scheme::Nopl,
    };
    let opts = RefineOptions {
        reference,
        initial_z,
        mixing_floor: cfg.mixing_floor,
    };
    refine(inst, &rule, cfg.r, cfg.m, cfg.seed, &opts)
}

/// `ceil(log(iota) / log(eps))` iterations bring the error from 1 to `iota`
/// at contraction `eps` per step.
pub fn iterations_needed(eps: f64, iota: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("contraction must lie in (0, 1), got {eps}")));
    }
    if !(iota > 0.0 && iota < 1.0) {
        return Err(Error::InvalidArgument(format!("target must lie in (0, 1), got {iota}")));
    }
    let ratio = iota.ln() / eps.ln();
    let nearest = ratio.round();
    let steps = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    Ok(steps.max(1.0) as usize)
}
