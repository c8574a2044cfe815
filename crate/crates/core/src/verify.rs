//! Accuracy metrics and Monte Carlo checks of the estimators' statistical
//! behaviour: asymptotic covariance, optimality of the OPL weights,
//! high-probability error bounds, the risk bound and geometric decay of the
//! iterative solver.
//!
//! Each check returns a [`CheckReport`] carrying the observed statistic, the
//! threshold it was held to, the sample sizes and the seed, so any report
//! can be regenerated.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms_sq, gram, thin_svd, Matrix, SpdFactor, Vector};
use crate::rng::{self, derive_seed};
use crate::sampling::{
    draw_plan, probs_coefficient_weighted, recommended_sample_size, probs_column, probs_leverage, probs_ridge_leverage, probs_rsis,
    ProbabilityVector, Scheme,
};
use crate::solvers::{ridge_exact, rshrr, two_step_with, IterativeConfig, ProblemInstance};

/// `||beta_hat - beta_exact|| / ||beta_exact||`
pub fn estimation_error(beta_hat: &Vector, beta_exact: &Vector) -> Result<f64> {
    if beta_hat.len() != beta_exact.len() {
        return Err(Error::Dimension(format!(
            "estimate has length {}, exact solution {}",
            beta_hat.len(),
            beta_exact.len()
        )));
    }
    let denom = beta_exact.norm();
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("exact solution is zero".into()));
    }
    Ok((beta_hat - beta_exact).norm() / denom)
}

/// `||A beta_hat - A beta_exact|| / ||A beta_exact||`
pub fn prediction_error(a: &Matrix, beta_hat: &Vector, beta_exact: &Vector) -> Result<f64> {
    if beta_hat.len() != a.ncols() || beta_exact.len() != a.ncols() {
        return Err(Error::Dimension("coefficient length does not match the design".into()));
    }
    let fitted = a * beta_exact;
    let denom = fitted.norm();
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("exact fit A beta is zero".into()));
    }
    Ok((a * beta_hat - fitted).norm() / denom)
}

/// `lambda^2 / p^2 * sum_i beta_i^2 ||A_i||^2 / pi_i`. Terms with a zero
/// numerator contribute nothing whatever their probability.
pub fn trace_vc(a: &Matrix, beta_rls: &Vector, probs: &ProbabilityVector, lambda: f64) -> Result<f64> {
    let p = a.ncols();
    if beta_rls.len() != p || probs.len() != p {
        return Err(Error::Dimension("beta, probabilities and design disagree on p".into()));
    }
    let norms = column_norms_sq(a);
    let mut total = 0.0;
    for i in 0..p {
        let num = beta_rls[i] * beta_rls[i] * norms[i];
        if num == 0.0 {
            continue;
        }
        let pi = probs.as_slice()[i];
        if !(pi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "feature {i} contributes to the variance but has zero probability"
            )));
        }
        total += num / pi;
    }
    Ok(lambda * lambda / (p * p) as f64 * total)
}

/// `lambda^2 / p^2 * (sum_i |beta_i| ||A_i||)^2`, the value of [`trace_vc`]
/// at the OPL probabilities.
pub fn trace_vc_lower_bound(a: &Matrix, beta_rls: &Vector, lambda: f64) -> f64 {
    let p = a.ncols() as f64;
    let s: f64 = column_norms_sq(a)
        .iter()
        .zip(beta_rls.iter())
        .map(|(n2, b)| b.abs() * n2.sqrt())
        .sum();
    lambda * lambda / (p * p) * s * s
}

/// Asymptotic covariance of the sketched dual estimator.
#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    /// `sum_i A_i A_i^T z* z*^T A_i A_i^T / (p^2 pi_i)`
    pub v_c: Matrix,
    /// `(M_A/p)^{-1} (V_c / r) (M_A/p)^{-1}`
    pub v: Matrix,
    pub trace_vc: f64,
    /// `(A A^T z*)(A A^T z*)^T / p^2`: the squared mean of the per-draw
    /// score, which the asymptotic form drops.
    pub mean_term: Matrix,
    /// `(M_A/p)^{-1} ((V_c - mean_term) / r) (M_A/p)^{-1}`, the exact
    /// first-order covariance at finite `p`.
    pub v_centered: Matrix,
}

fn sandwich(m_inv: &Matrix, inner: &Matrix, scale: f64) -> Matrix {
    let mut out = m_inv * inner * m_inv * scale;
    let n = out.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

pub fn asymptotic_variance(
    a: &Matrix,
    z_star: &Vector,
    probs: &ProbabilityVector,
    lambda: f64,
    r: usize,
) -> Result<VarianceEstimate> {
    let (n, p) = a.shape();
    if z_star.len() != n || probs.len() != p {
        return Err(Error::Dimension("z*, probabilities and design disagree".into()));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    // A_i^T z* = lambda beta_i
    let scores = a.tr_mul(z_star);
    let pf = p as f64;
    let mut scaled = a.clone();
    let mut trace = 0.0;
    for i in 0..p {
        let c = scores[i];
        if c == 0.0 {
            scaled.column_mut(i).fill(0.0);
            continue;
        }
        let pi = probs.as_slice()[i];
        if !(pi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "feature {i} contributes to the variance but has zero probability"
            )));
        }
        let w = c * c / (pf * pf * pi);
        trace += w * a.column(i).norm_squared();
        scaled.column_mut(i).scale_mut(w.sqrt());
    }
    let v_c = &scaled * scaled.transpose();
    let mean = a * &scores / pf;
    let mean_term = &mean * mean.transpose();

    let m_inv = SpdFactor::new(&gram(a, lambda)?)?.inverse();
    let scale = pf * pf / r as f64;
    let v = sandwich(&m_inv, &v_c, scale);
    let v_centered = sandwich(&m_inv, &(&v_c - &mean_term), scale);
    Ok(VarianceEstimate {
        v_c,
        v,
        trace_vc: trace,
        mean_term,
        v_centered,
    })
}

/// Outcome of one Monte Carlo check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub sample_sizes: BTreeMap<String, u64>,
    pub seed: u64,
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            statistic: f64::NAN,
            threshold: f64::NAN,
            sample_sizes: BTreeMap::new(),
            seed,
            details: BTreeMap::new(),
        }
    }

    fn size(mut self, key: &str, value: usize) -> Self {
        self.sample_sizes.insert(key.to_string(), value as u64);
        self
    }

    fn detail(&mut self, key: &str, value: f64) {
        self.details.insert(key.to_string(), value);
    }
}

fn relative_frobenius(x: &Matrix, reference: &Matrix) -> f64 {
    let denom = reference.norm();
    let diff = (x - reference).norm();
    if denom == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / denom
    }
}

/// Symmetric inverse square root restricted to the numerically nonzero
/// eigenspace.
fn pinv_sqrt(m: &Matrix) -> Matrix {
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = top * 1e-12;
    let mut d = Matrix::zeros(m.nrows(), m.ncols());
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e > cut && e > 0.0 {
            d[(k, k)] = 1.0 / e.sqrt();
        }
    }
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Skewness and excess kurtosis of each row of `samples` (one sample per
/// column), skipping rows that are identically zero.
fn moments(samples: &Matrix) -> (f64, f64) {
    let reps = samples.ncols() as f64;
    let mut max_skew: f64 = 0.0;
    let mut max_kurt: f64 = 0.0;
    for row in samples.row_iter() {
        let mean = row.sum() / reps;
        let m2 = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps;
        if m2 <= 0.0 {
            continue;
        }
        let m3 = row.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / reps;
        let m4 = row.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / reps;
        max_skew = max_skew.max((m3 / m2.powf(1.5)).abs());
        max_kurt = max_kurt.max((m4 / (m2 * m2) - 3.0).abs());
    }
    (max_skew, max_kurt)
}

/// Minimum repetitions accepted by [`mc_variance_check`].
pub const MIN_VARIANCE_REPS: usize = 500;

/// Empirical covariance of `z_hat - z*` over independent sketches versus the
/// asymptotic covariance. Passes when the relative Frobenius distance to the
/// finite-`p` covariance is at most `tolerance`; the distance to the bare
/// asymptotic form is reported alongside as `distance_asymptotic`.
pub fn mc_variance_check(
    inst: &ProblemInstance,
    probs: &ProbabilityVector,
    r: usize,
    reps: usize,
    tolerance: f64,
    seed: u64,
) -> Result<CheckReport> {
    if reps < MIN_VARIANCE_REPS {
        return Err(Error::InvalidArgument(format!(
            "variance check needs at least {MIN_VARIANCE_REPS} repetitions, got {reps}"
        )));
    }
    let n = inst.n();
    if reps <= n {
        return Err(Error::InvalidArgument(format!(
            "{reps} repetitions cannot give a non-singular {n}x{n} covariance"
        )));
    }
    let exact = ridge_exact(inst)?;
    let var = asymptotic_variance(inst.a(), &exact.z, probs, inst.lambda(), r)?;

    let deltas: Vec<Vector> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let plan = draw_plan(probs, r, derive_seed(seed, &format!("rep/{rep}")))?;
            Ok(rshrr(inst, &plan)?.z - &exact.z)
        })
        .collect::<Result<_>>()?;
    let samples = Matrix::from_columns(&deltas);
    let mean = samples.column_mean();
    let mut centered = samples.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.transpose() / (reps as f64 - 1.0);

    let distance = relative_frobenius(&cov, &var.v_centered);
    let (skew, kurt) = moments(&(pinv_sqrt(&var.v_centered) * &samples));

    let mut report = CheckReport::new("mc-variance", seed).size("reps", reps).size("r", r).size("n", n).size("p", inst.p());
    report.statistic = distance;
    report.threshold = tolerance;
    report.passed = distance <= tolerance;
    report.detail("distance_asymptotic", relative_frobenius(&cov, &var.v));
    report.detail("max_abs_skewness", skew);
    report.detail("max_abs_excess_kurtosis", kurt);
    report.detail("trace_vc", var.trace_vc);
    report.detail("trace_empirical", cov.trace());
    report.detail("trace_v", var.v.trace());
    report.detail("trace_v_centered", var.v_centered.trace());
    Ok(report)
}

/// Full-support Dirichlet(1, ..., 1) probabilities.
fn random_probabilities(rng: &mut rng::Rng, p: usize) -> Result<ProbabilityVector> {
    let w: Vec<f64> = (0..p).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let w = w.into_iter().map(|x: f64| x.max(f64::MIN_POSITIVE)).collect();
    ProbabilityVector::from_weights(w, Scheme::Custom)
}

/// Compares the OPL value of `tr(V_c)` against `trials` random full-support
/// probability vectors and the closed-form lower bound.
pub fn trace_minimality_check(inst: &ProblemInstance, trials: usize, seed: u64) -> Result<CheckReport> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("trace check needs at least 100 trials, got {trials}")));
    }
    let exact = ridge_exact(inst)?;
    let a = inst.a();
    let lambda = inst.lambda();
    let opl = probs_coefficient_weighted(a, exact.beta.as_slice(), Scheme::Opl)?;
    let opl_trace = trace_vc(a, &exact.beta, &opl, lambda)?;
    let bound = trace_vc_lower_bound(a, &exact.beta, lambda);

    let mut g = rng::seeded(seed);
    let mut min_trial = f64::INFINITY;
    let mut violations = 0usize;
    for _ in 0..trials {
        let pv = random_probabilities(&mut g, inst.p())?;
        let t = trace_vc(a, &exact.beta, &pv, lambda)?;
        min_trial = min_trial.min(t);
        if opl_trace > t * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    let mut report = CheckReport::new("trace-minimality", seed).size("trials", trials).size("p", inst.p());
    report.statistic = violations as f64;
    report.threshold = 0.0;
    report.passed = violations == 0;
    report.detail("opl_trace", opl_trace);
    report.detail("lower_bound", bound);
    report.detail("min_trial_trace", min_trial);
    report.detail("bound_gap", (opl_trace - bound).abs() / bound.max(f64::MIN_POSITIVE));
    Ok(report)
}

/// `delta + 3 sqrt(delta (1 - delta) / reps)`
pub fn binomial_allowance(delta: f64, reps: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / reps as f64).sqrt()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn error_report(name: &str, seed: u64, mut errors: Vec<f64>, limit: f64, allowed: f64) -> CheckReport {
    let reps = errors.len();
    let violations = errors.iter().filter(|&&e| e > limit).count();
    errors.sort_by(f64::total_cmp);
    let mut report = CheckReport::new(name, seed).size("reps", reps);
    report.statistic = violations as f64 / reps as f64;
    report.threshold = allowed;
    report.passed = report.statistic <= allowed;
    report.detail("error_limit", limit);
    report.detail("median_error", quantile(&errors, 0.5));
    report.detail("q90_error", quantile(&errors, 0.9));
    report.detail("max_error", *errors.last().unwrap_or(&f64::NAN));
    report
}

/// Fraction of sketched solves whose estimation error exceeds `eps`; passes
/// when it is within [`binomial_allowance`] of `delta`.
#[allow(clippy::too_many_arguments)]
pub fn error_bound_check(
    inst: &ProblemInstance,
    probs: &ProbabilityVector,
    r: usize,
    eps: f64,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<CheckReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    let exact = ridge_exact(inst)?;
    let errors: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let plan = draw_plan(probs, r, derive_seed(seed, &format!("rep/{rep}")))?;
            estimation_error(&rshrr(inst, &plan)?.beta, &exact.beta)
        })
        .collect::<Result<_>>()?;
    let mut report = error_report("error-bound", seed, errors, eps, binomial_allowance(delta, reps));
    report.sample_sizes.insert("r".into(), r as u64);
    report.detail("epsilon", eps);
    report.detail("delta", delta);
    Ok(report)
}

/// The iterative analogue: error after `cfg.m` two-step iterations against
/// `eps^m`, allowing a violation fraction of `m * delta` plus binomial slack.
pub fn iterative_error_bound_check(
    inst: &ProblemInstance,
    cfg: &IterativeConfig,
    eps: f64,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<CheckReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    let exact = ridge_exact(inst)?;
    let errors: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let run = IterativeConfig {
                seed: derive_seed(seed, &format!("rep/{rep}")),
                ..*cfg
            };
            estimation_error(&two_step_with(inst, &run, None, None)?.0.beta, &exact.beta)
        })
        .collect::<Result<_>>()?;
    let m = cfg.m as f64;
    let allowed = binomial_allowance((m * delta).min(1.0), reps);
    let mut report = error_report("iterative-error-bound", seed, errors, eps.powf(m), allowed);
    report.sample_sizes.insert("r".into(), cfg.r as u64);
    report.sample_sizes.insert("r0".into(), cfg.r0 as u64);
    report.sample_sizes.insert("m".into(), cfg.m as u64);
    Ok(report)
}

/// Estimator whose risk [`risk_mc`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskEstimator {
    Exact,
    /// One sketched solve per noise draw; data-dependent schemes (OPL,
    /// RSIS) are recomputed from that draw's exact solution.
    Sketched { scheme: Scheme, r: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// Monte Carlo risk of the chosen estimator.
    pub risk: f64,
    /// Monte Carlo risk of the exact ridge fit on the same noise draws.
    pub risk_exact: f64,
    pub mu: f64,
    pub spectral_norm: f64,
    /// `risk_exact + 3 eps / n * ||A||_2^2 (mu^2 + ||beta||^2)`
    pub bound: f64,
    pub reps: usize,
    pub seed: u64,
}

impl RiskReport {
    pub fn within_bound(&self) -> bool {
        self.risk <= self.bound
    }
}

/// `sqrt(sum_j sigma_j^2 / (sigma_j^2 + lambda)^2)`
pub fn risk_mu(singular_values: &[f64], lambda: f64) -> f64 {
    singular_values
        .iter()
        .map(|s| s * s / (s * s + lambda).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Regenerates `y = A beta_true + noise` with standard Gaussian noise `reps`
/// times and averages `||A beta_hat - A beta_true||^2 / n`.
pub fn risk_mc(
    a: &Matrix,
    beta_true: &Vector,
    lambda: f64,
    estimator: RiskEstimator,
    eps: f64,
    reps: usize,
    seed: u64,
) -> Result<RiskReport> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!("risk estimate needs at least 100 repetitions, got {reps}")));
    }
    let (n, p) = a.shape();
    if beta_true.len() != p {
        return Err(Error::Dimension(format!("beta has length {}, design has {p} columns", beta_true.len())));
    }
    let a = Arc::new(a.clone());
    let svd = thin_svd(&a)?;
    let signal = a.as_ref() * beta_true;

    let fixed = match estimator {
        RiskEstimator::Sketched { scheme, .. } => match scheme {
            Scheme::Uni => Some(ProbabilityVector::uniform(p)?),
            Scheme::Col => Some(probs_column(&a)?),
            Scheme::Lev => Some(probs_leverage(&svd)?),
            Scheme::Rlev => Some(probs_ridge_leverage(&svd, lambda)?),
            Scheme::Opl | Scheme::Rsis => None,
            other => {
                return Err(Error::InvalidArgument(format!("risk estimator does not support {other}")));
            }
        },
        RiskEstimator::Exact => None,
    };

    let per_rep: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut g = rng::seeded(derive_seed(seed, &format!("noise/{rep}")));
            let noise = Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut g)));
            let inst = ProblemInstance::new(Arc::clone(&a), &signal + noise, lambda)?;
            let exact = ridge_exact(&inst)?;
            let beta_hat = match estimator {
                RiskEstimator::Exact => exact.beta.clone(),
                RiskEstimator::Sketched { scheme, r } => {
                    let probs = match (&fixed, scheme) {
                        (Some(pv), _) => pv.clone(),
                        (None, Scheme::Rsis) => probs_rsis(exact.beta.as_slice())?,
                        (None, _) => probs_coefficient_weighted(&a, exact.beta.as_slice(), Scheme::Opl)?,
                    };
                    let plan = draw_plan(&probs, r, g.random())?;
                    rshrr(&inst, &plan)?.beta
                }
            };
            let loss = |b: &Vector| (a.as_ref() * b - &signal).norm_squared() / n as f64;
            Ok((loss(&beta_hat), loss(&exact.beta)))
        })
        .collect::<Result<_>>()?;

    let risk = per_rep.iter().map(|x| x.0).sum::<f64>() / reps as f64;
    let risk_exact = per_rep.iter().map(|x| x.1).sum::<f64>() / reps as f64;
    let mu = risk_mu(&svd.singular_values, lambda);
    let spectral = svd.spectral_norm();
    let bound = risk_exact + 3.0 * eps / n as f64 * spectral * spectral * (mu * mu + beta_true.norm_squared());
    Ok(RiskReport {
        risk,
        risk_exact,
        mu,
        spectral_norm: spectral,
        bound,
        reps,
        seed,
    })
}

/// The worked 2x3 instance with `beta_true = (1, 1, 0)`, followed by
/// `count` random Gaussian instances with `2 <= n <= 6` and `n < p <= 30`.
pub fn risk_instances(count: usize, seed: u64) -> Vec<(Matrix, Vector)> {
    let mut out = vec![(
        Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        Vector::from_vec(vec![1.0, 1.0, 0.0]),
    )];
    let mut g = rng::seeded(seed);
    for _ in 0..count {
        let n = g.random_range(2..=6);
        let p = g.random_range(n + 1..=30);
        let a = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut g));
        let beta = Vector::from_fn(p, |_, _| StandardNormal.sample(&mut g));
        out.push((a, beta));
    }
    out
}

/// Runs [`risk_mc`] with OPL sketches of size `min(recommended, p)` on each
/// instance; passes when the fraction within the bound is at least
/// `required_fraction`.
#[allow(clippy::too_many_arguments)]
pub fn risk_bound_check(
    instances: &[(Matrix, Vector)],
    lambda: f64,
    eps: f64,
    design_eps: f64,
    delta: f64,
    reps: usize,
    required_fraction: f64,
    seed: u64,
) -> Result<CheckReport> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("need at least one instance".into()));
    }
    let mut within = 0usize;
    let mut within_design = 0usize;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    for (k, (a, beta)) in instances.iter().enumerate() {
        let rank = thin_svd(a)?.rank();
        let r = recommended_sample_size(rank, design_eps, delta, 1.0)?.min(a.ncols());
        let est = RiskEstimator::Sketched { scheme: Scheme::Opl, r };
        let report = risk_mc(a, beta, lambda, est, eps, reps, derive_seed(seed, &format!("instance/{k}")))?;
        if report.within_bound() {
            within += 1;
        }
        // the same bound with epsilon set to the design accuracy behind r
        let design_bound = report.risk_exact + (report.bound - report.risk_exact) * design_eps / eps;
        if report.risk <= design_bound {
            within_design += 1;
        }
        worst_excess = worst_excess.max((report.risk - report.bound) / report.bound);
    }
    let fraction = within as f64 / instances.len() as f64;
    let mut report = CheckReport::new("risk-bound", seed).size("instances", instances.len()).size("reps", reps);
    report.statistic = fraction;
    report.threshold = required_fraction;
    report.passed = fraction >= required_fraction;
    report.detail("epsilon", eps);
    report.detail("worst_relative_excess", worst_excess);
    report.detail("fraction_within_at_design_eps", within_design as f64 / instances.len() as f64);
    Ok(report)
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Relative errors at or below this are treated as converged when checking
/// monotone decay.
pub const ROUNDOFF_FLOOR: f64 = 1e3 * f64::EPSILON;

/// Runs the two-step solver `runs` times with derived seeds and checks that
/// the median error decays: never increasing (above [`ROUNDOFF_FLOOR`]) and
/// contracting by at least `max_ratio` in each of the first `ratio_steps`
/// iterations, the first measured from the zero start.
pub fn geometric_decay_check(
    inst: &ProblemInstance,
    cfg: &IterativeConfig,
    runs: usize,
    max_ratio: f64,
    ratio_steps: usize,
    seed: u64,
) -> Result<CheckReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let exact = ridge_exact(inst)?;
    let traces: Vec<Vec<f64>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let cfg = IterativeConfig {
                seed: derive_seed(seed, &format!("run/{run}")),
                ..*cfg
            };
            let (_, trace) = two_step_with(inst, &cfg, Some(&exact), None)?;
            Ok(trace.errors().expect("reference supplied"))
        })
        .collect::<Result<_>>()?;
    let medians: Vec<f64> = (0..cfg.m)
        .map(|t| median(&traces.iter().map(|tr| tr[t]).collect::<Vec<_>>()))
        .collect();
    let monotone = medians.windows(2).all(|w| w[1] <= w[0].max(ROUNDOFF_FLOOR));
    // beta_0 = 0 has relative error exactly 1
    let with_start: Vec<f64> = std::iter::once(1.0).chain(medians.iter().copied()).collect();
    let worst_ratio = with_start
        .windows(2)
        .take(ratio_steps)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);

    let mut report = CheckReport::new("geometric-decay", seed).size("runs", runs).size("m", cfg.m).size("r", cfg.r).size("r0", cfg.r0);
    report.statistic = worst_ratio;
    report.threshold = max_ratio;
    report.passed = monotone && worst_ratio <= max_ratio;
    report.detail("monotone", if monotone { 1.0 } else { 0.0 });
    for (t, m) in medians.iter().enumerate() {
        report.detail(&format!("median_error_m{}", t + 1), *m);
    }
    Ok(report)
}

/// Dual-form ridge solution against a brute-force primal solve
/// `(A^T A + lambda I)^{-1} A^T y` on random small instances.
pub fn exactness_check(instances: usize, tolerance: f64, seed: u64) -> Result<CheckReport> {
    let mut g = rng::seeded(seed);
    let lambdas = [0.1, 1.0, 10.0];
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let n = g.random_range(1..=10);
        let p = g.random_range(1..=30);
        let lambda = lambdas[k % lambdas.len()];
        let a = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut g));
        let y = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut g));
        let primal_gram = gram(&a.transpose(), lambda)?;
        let primal = SpdFactor::new(&primal_gram)?.solve(&a.tr_mul(&y))?;
        let dual = ridge_exact(&ProblemInstance::new(a, y, lambda)?)?;
        worst = worst.max((dual.beta - primal).amax());
    }
    let mut report = CheckReport::new("exactness", seed).size("instances", instances);
    report.statistic = worst;
    report.threshold = tolerance;
    report.passed = worst <= tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_example1;
    use crate::sampling::SamplingPlan;
    use approx::assert_abs_diff_eq;

    fn worked() -> ProblemInstance {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        ProblemInstance::new(a, Vector::from_vec(vec![1.0, 1.0]), 1.0).unwrap()
    }

    fn random_instance(seed: u64, n: usize, p: usize, lambda: f64) -> ProblemInstance {
        let mut g = rng::seeded(seed);
        let a = Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut g));
        let y = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut g));
        ProblemInstance::new(a, y, lambda).unwrap()
    }

    #[test]
    fn error_metric_identities() {
        let b = Vector::from_vec(vec![0.5, -1.0, 2.0]);
        assert_eq!(estimation_error(&b, &b).unwrap(), 0.0);
        assert_eq!(estimation_error(&Vector::zeros(3), &b).unwrap(), 1.0);
        assert_eq!(estimation_error(&(&b * 2.0), &b).unwrap(), 1.0);
        assert!(estimation_error(&b, &Vector::zeros(3)).is_err());

        let a = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(prediction_error(&a, &b, &b).unwrap(), 0.0);
        assert_eq!(prediction_error(&a, &Vector::zeros(3), &b).unwrap(), 1.0);
        assert_eq!(prediction_error(&a, &(&b * 2.0), &b).unwrap(), 1.0);
        let null = Vector::from_vec(vec![2.0, -1.0, 1.0]);
        assert!(prediction_error(&a, &b, &null).is_err());
    }

    #[test]
    fn trace_vc_worked_values() {
        let inst = worked();
        let beta = Vector::from_vec(vec![0.5, 0.5, 0.0]);
        let opl = ProbabilityVector::custom(vec![0.5, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(trace_vc(inst.a(), &beta, &opl, 1.0).unwrap(), 1.0 / 9.0, epsilon = 1e-15);
        let uni = ProbabilityVector::uniform(3).unwrap();
        assert_abs_diff_eq!(trace_vc(inst.a(), &beta, &uni, 1.0).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_vc_lower_bound(inst.a(), &beta, 1.0), 1.0 / 9.0, epsilon = 1e-15);

        let starved = ProbabilityVector::custom(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(trace_vc(inst.a(), &beta, &starved, 1.0).is_err());
    }

    #[test]
    fn mixing_uniform_into_opl_increases_the_trace() {
        let inst = random_instance(1, 4, 30, 1.0);
        let beta = ridge_exact(&inst).unwrap().beta;
        let opl = probs_coefficient_weighted(inst.a(), beta.as_slice(), Scheme::Opl).unwrap();
        let base = trace_vc(inst.a(), &beta, &opl, 1.0).unwrap();
        let mixed = opl.with_uniform_floor(0.01).unwrap();
        assert!(trace_vc(inst.a(), &beta, &mixed, 1.0).unwrap() > base);
    }

    #[test]
    fn opl_trace_equals_lower_bound() {
        for seed in 0..20 {
            let inst = random_instance(seed, 5, 40, 0.5 + seed as f64);
            let beta = ridge_exact(&inst).unwrap().beta;
            let opl = probs_coefficient_weighted(inst.a(), beta.as_slice(), Scheme::Opl).unwrap();
            let t = trace_vc(inst.a(), &beta, &opl, inst.lambda()).unwrap();
            let lb = trace_vc_lower_bound(inst.a(), &beta, inst.lambda());
            assert!((t - lb).abs() <= 1e-12 * lb, "{t} vs {lb}");
        }
    }

    #[test]
    fn column_norm_weights_minimize_the_upper_bound() {
        // lambda^2 ||M^{-1} y||^2 / p^2 * sum ||A_i||^4 / pi_i
        let inst = random_instance(4, 5, 40, 2.0);
        let norms = column_norms_sq(inst.a());
        let upper = |pv: &ProbabilityVector| -> f64 {
            norms.iter().zip(pv.as_slice()).map(|(n2, pi)| n2 * n2 / pi).sum()
        };
        let col = probs_column(inst.a()).unwrap();
        let best = upper(&col);
        let mut g = rng::seeded(8);
        for _ in 0..100 {
            let pv = random_probabilities(&mut g, inst.p()).unwrap();
            assert!(best <= upper(&pv) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn asymptotic_variance_worked_instance() {
        let inst = worked();
        let z = Vector::from_vec(vec![0.5, 0.5]);
        let opl = ProbabilityVector::custom(vec![0.5, 0.5, 0.0]).unwrap();
        let var = asymptotic_variance(inst.a(), &z, &opl, 1.0, 2).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.5])) / 9.0;
        assert_abs_diff_eq!(var.v_c, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(var.v_c.trace(), var.trace_vc, epsilon = 1e-12);

        let var4 = asymptotic_variance(inst.a(), &z, &opl, 1.0, 4).unwrap();
        assert_abs_diff_eq!(var4.v * 2.0, var.v.clone(), epsilon = 1e-15);
    }

    #[test]
    fn asymptotic_variance_trace_matches() {
        for seed in 0..10 {
            let inst = random_instance(seed, 4, 25, 1.0);
            let exact = ridge_exact(&inst).unwrap();
            let pv = probs_column(inst.a()).unwrap();
            let var = asymptotic_variance(inst.a(), &exact.z, &pv, 1.0, 10).unwrap();
            let t = trace_vc(inst.a(), &exact.beta, &pv, 1.0).unwrap();
            assert!((var.v_c.trace() - t).abs() <= 1e-12 * t.max(1.0));
            assert!((var.trace_vc - t).abs() <= 1e-12 * t.max(1.0));
        }
    }

    #[test]
    fn centered_variance_is_exact_for_one_draw_linearization() {
        // Var of the per-draw score A_i A_i^T z* / pi_i equals V_c p^2 minus
        // its squared mean; enumerate the p outcomes directly.
        let inst = random_instance(12, 3, 7, 1.5);
        let exact = ridge_exact(&inst).unwrap();
        let pv = probs_column(inst.a()).unwrap();
        let var = asymptotic_variance(inst.a(), &exact.z, &pv, 1.5, 1).unwrap();
        let mut second = Matrix::zeros(3, 3);
        let mut first = Vector::zeros(3);
        for i in 0..7 {
            let ai = inst.a().column(i);
            let score = ai * (ai.dot(&exact.z) / pv.as_slice()[i]);
            second += &score * score.transpose() * pv.as_slice()[i];
            first += &score * pv.as_slice()[i];
        }
        let cov = second - &first * first.transpose();
        let m_inv = SpdFactor::new(&gram(inst.a(), 1.5).unwrap()).unwrap().inverse();
        let expected = &m_inv * cov * &m_inv;
        assert!((var.v_centered - &expected).amax() <= 1e-10 * expected.amax());
    }

    #[test]
    fn degenerate_plan_has_zero_variance() {
        // one feature carries all the mass and all the signal: every sketch
        // reproduces the exact Gram matrix
        let a = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let inst = ProblemInstance::new(a, Vector::from_vec(vec![1.0, 1.0]), 1.0).unwrap();
        let pv = ProbabilityVector::custom(vec![1.0, 0.0, 0.0]).unwrap();
        let report = mc_variance_check(&inst, &pv, 4, 500, 0.15, 3).unwrap();
        assert!(report.passed);
        assert_eq!(report.statistic, 0.0);
        assert_eq!(report.details["trace_empirical"], 0.0);
    }

    #[test]
    fn variance_check_rejects_small_reps() {
        let inst = worked();
        let pv = ProbabilityVector::uniform(3).unwrap();
        assert!(mc_variance_check(&inst, &pv, 5, 10, 0.15, 0).is_err());
    }

    #[test]
    fn trace_minimality_on_worked_instance() {
        let report = trace_minimality_check(&random_instance(2, 3, 12, 1.0), 200, 5).unwrap();
        assert!(report.passed);
        assert!(report.details["bound_gap"] <= 1e-12);
        assert!(trace_minimality_check(&worked(), 10, 0).is_err());

        let single = ProblemInstance::new(Matrix::from_row_slice(2, 1, &[1.0, 2.0]), Vector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        let report = trace_minimality_check(&single, 100, 1).unwrap();
        assert!(report.passed);
        assert_abs_diff_eq!(report.details["opl_trace"], report.details["min_trial_trace"], epsilon = 1e-15);
    }

    #[test]
    fn error_bound_extremes_and_covering_plans() {
        let inst = random_instance(5, 4, 60, 1.0);
        let pv = probs_column(inst.a()).unwrap();
        let report = error_bound_check(&inst, &pv, 30, f64::INFINITY, 0.1, 100, 2).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert!(report.passed);
        let report = error_bound_check(&inst, &pv, 30, 0.0, 0.1, 100, 2).unwrap();
        assert_eq!(report.statistic, 1.0);
        assert!(!report.passed);

        // the covering plan is exact, so its error is zero
        let w = worked();
        let probs = ProbabilityVector::custom(vec![0.5, 0.5, 0.0]).unwrap();
        let plan = SamplingPlan::from_draws(probs, vec![0, 1], 0).unwrap();
        let err = estimation_error(&rshrr(&w, &plan).unwrap().beta, &ridge_exact(&w).unwrap().beta).unwrap();
        assert!(err <= 1e-15);
    }

    #[test]
    fn risk_mu_worked_value() {
        assert_abs_diff_eq!(risk_mu(&[1.0, 1.0], 1.0), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(risk_mu(&[1.0, 1.0], 1.0), 0.70711, epsilon = 1e-5);
    }

    #[test]
    fn risk_of_exact_ridge_vanishes_without_noise_at_small_lambda() {
        // the exact risk with unit noise is the variance term, which stays
        // bounded; the bias term tends to zero as lambda -> 0+
        let a = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let beta = Vector::from_vec(vec![1.0, -1.0, 1.0]);
        let inst = ProblemInstance::new(a.clone(), &a * &beta, 1e-10).unwrap();
        let fit = ridge_exact(&inst).unwrap();
        assert!((&a * &fit.beta - &a * &beta).norm() <= 1e-8);
    }

    #[test]
    fn risk_report_is_reproducible_and_bounded() {
        let inst = random_instance(6, 3, 20, 1.0);
        let beta = Vector::from_fn(20, |i, _| (i as f64).cos());
        let est = RiskEstimator::Sketched { scheme: Scheme::Opl, r: 20 };
        let r1 = risk_mc(inst.a(), &beta, 1.0, est, 0.5, 100, 4).unwrap();
        let r2 = risk_mc(inst.a(), &beta, 1.0, est, 0.5, 100, 4).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.within_bound());
        let exact = risk_mc(inst.a(), &beta, 1.0, RiskEstimator::Exact, 0.5, 100, 4).unwrap();
        assert_eq!(exact.risk, exact.risk_exact);
        assert!(risk_mc(inst.a(), &beta, 1.0, est, 0.5, 10, 4).is_err());
    }

    #[test]
    fn risk_instances_are_reproducible() {
        let a = risk_instances(5, 2);
        assert_eq!(a.len(), 6);
        assert_eq!(a[0].0.shape(), (2, 3));
        assert!(a.iter().skip(1).all(|(m, b)| m.nrows() < m.ncols() && b.len() == m.ncols()));
        assert_eq!(a[3].1, risk_instances(5, 2)[3].1);
    }

    #[test]
    fn decay_check_small_instance() {
        let data = gen_example1(10, 200, 5.0, 3).unwrap();
        let cfg = IterativeConfig::new(80, 20, 3, 0);
        let report = geometric_decay_check(&data.instance, &cfg, 10, 0.9, 2, 1).unwrap();
        assert!(report.details.contains_key("median_error_m3"));
        assert!(report.details["median_error_m3"] <= report.details["median_error_m1"]);
    }

    #[test]
    fn exactness_on_random_instances() {
        let report = exactness_check(30, 1e-8, 0).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn reports_serialize() {
        let report = exactness_check(3, 1e-8, 0).unwrap();
        let line = serde_json::to_string(&report).unwrap();
        let back: CheckReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, report);
    }

    mod props {
        use super::*;
        use crate::sampling::probs_coefficient_weighted;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn optimal_probabilities_minimize_trace(
                seed in 0u64..10_000,
                n in 1usize..5,
                extra in 1usize..12,
                lambda in 0.05f64..20.0,
                weights in prop::collection::vec(0.01f64..1.0, 16),
            ) {
                let inst = random_instance(seed, n, n + extra, lambda);
                let beta = ridge_exact(&inst).unwrap().beta;
                let opl = probs_coefficient_weighted(inst.a(), beta.as_slice(), Scheme::Opl).unwrap();
                let best = trace_vc(inst.a(), &beta, &opl, lambda).unwrap();
                let other = ProbabilityVector::custom({
                    let w = &weights[..inst.p()];
                    let s: f64 = w.iter().sum();
                    w.iter().map(|v| v / s).collect()
                })
                .unwrap();
                let trial = trace_vc(inst.a(), &beta, &other, lambda).unwrap();
                prop_assert!(best <= trial * (1.0 + 1e-10), "{best} > {trial}");
                let bound = trace_vc_lower_bound(inst.a(), &beta, lambda);
                prop_assert!((best - bound).abs() <= 1e-9 * bound.max(1e-300));
            }

            #[test]
            fn relative_errors_are_scale_free(v in prop::collection::vec(-5.0f64..5.0, 1..8), c in 0.1f64..10.0) {
                let x = Vector::from_vec(v.clone());
                prop_assume!(x.norm() > 1e-6);
                let y = x.map(|t| t + 0.5);
                let e = estimation_error(&y, &x).unwrap();
                let scaled = estimation_error(&(&y * c), &(&x * c)).unwrap();
                prop_assert!((e - scaled).abs() <= 1e-12 * e.max(1.0));
            }
        }
    }
}
