//! The named verification checks and their default sizes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::gen_example1;
use crate::error::{Error, Result};
use crate::linalg::{thin_svd, Matrix, Vector};
use crate::rng::{self, derive_seed};
use crate::sampling::{probs_coefficient_weighted, recommended_sample_size, Scheme};
use crate::solvers::{iterations_needed, ridge_exact, IterativeConfig, ProblemInstance};
use crate::verify::{
    error_bound_check, exactness_check, geometric_decay_check, iterative_error_bound_check, mc_variance_check,
    risk_bound_check, risk_instances, trace_minimality_check, CheckReport,
};
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    Exactness,
    TraceMinimality,
    McVariance,
    ErrorBound,
    RiskBound,
    GeometricDecay,
    IterativeErrorBound,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::Exactness,
        CheckName::TraceMinimality,
        CheckName::McVariance,
        CheckName::ErrorBound,
        CheckName::RiskBound,
        CheckName::GeometricDecay,
        CheckName::IterativeErrorBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Exactness => "exactness",
            CheckName::TraceMinimality => "trace-minimality",
            CheckName::McVariance => "mc-variance",
            CheckName::ErrorBound => "error-bound",
            CheckName::RiskBound => "risk-bound",
            CheckName::GeometricDecay => "geometric-decay",
            CheckName::IterativeErrorBound => "iterative-error-bound",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// The sizes of the acceptance suite.
    #[default]
    Desk,
    /// Reduced sizes for smoke tests.
    Quick,
}

/// Sizes and thresholds of every check at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub exactness_instances: usize,
    pub exactness_tolerance: f64,
    pub trace_instances: usize,
    pub trace_n: usize,
    pub trace_p: usize,
    pub trace_trials: usize,
    pub variance_n: usize,
    pub variance_p: usize,
    pub variance_lambda: f64,
    pub variance_r: usize,
    pub variance_r_grid: Vec<usize>,
    pub variance_reps: usize,
    pub variance_tolerance: f64,
    pub bound_n: usize,
    pub bound_p: usize,
    pub bound_lambda: f64,
    pub bound_eps: f64,
    pub bound_delta: f64,
    pub bound_kappa: f64,
    pub bound_reps: usize,
    pub risk_instances: usize,
    pub risk_lambda: f64,
    pub risk_reps: usize,
    pub risk_fraction: f64,
    pub decay_r: usize,
    pub decay_r0: usize,
    pub decay_m: usize,
    pub decay_runs: usize,
    pub decay_ratio: f64,
    pub decay_ratio_steps: usize,
    pub iterative_m: usize,
    pub iterative_reps: usize,
}

impl SuiteParams {
    pub fn for_scale(scale: Scale) -> Self {
        let desk = Self {
            exactness_instances: 100,
            exactness_tolerance: 1e-8,
            trace_instances: 50,
            trace_n: 5,
            trace_p: 50,
            trace_trials: 1000,
            variance_n: 10,
            variance_p: 500,
            variance_lambda: 10.0,
            variance_r: 300,
            variance_r_grid: vec![100, 300, 900],
            variance_reps: 2000,
            variance_tolerance: 0.15,
            bound_n: 100,
            bound_p: 2000,
            bound_lambda: 10.0,
            bound_eps: 0.5,
            bound_delta: 0.1,
            bound_kappa: 1.0,
            bound_reps: 200,
            risk_instances: 20,
            risk_lambda: 1.0,
            risk_reps: 500,
            risk_fraction: 0.9,
            decay_r: 500,
            decay_r0: 100,
            decay_m: 8,
            decay_runs: 50,
            decay_ratio: 0.9,
            decay_ratio_steps: 4,
            iterative_m: 3,
            iterative_reps: 100,
        };
        match scale {
            Scale::Desk => desk,
            Scale::Quick => Self {
                exactness_instances: 20,
                trace_instances: 5,
                trace_trials: 100,
                variance_p: 100,
                variance_r: 60,
                variance_r_grid: vec![30, 60, 120],
                variance_reps: 500,
                bound_n: 20,
                bound_p: 200,
                bound_reps: 50,
                risk_instances: 4,
                risk_reps: 100,
                decay_r: 100,
                decay_r0: 20,
                decay_m: 4,
                decay_runs: 10,
                decay_ratio_steps: 2,
                iterative_reps: 20,
                ..desk
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scale: Scale,
    /// Replaces the repetition count of every Monte Carlo check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
}

fn all_checks() -> Vec<CheckName> {
    CheckName::ALL.to_vec()
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            checks: all_checks(),
            seed: 0,
            scale: Scale::Desk,
            reps: None,
        }
    }
}

/// Runs checks in order, reusing the error-bound quantile as the risk
/// bound's epsilon.
pub struct Suite {
    pub params: SuiteParams,
    pub seed: u64,
    reps: Option<usize>,
    empirical_eps: Option<f64>,
}

impl Suite {
    pub fn new(cfg: &SuiteConfig) -> Self {
        Self {
            params: SuiteParams::for_scale(cfg.scale),
            seed: cfg.seed,
            reps: cfg.reps,
            empirical_eps: None,
        }
    }

    /// Epsilon for the risk bound, normally taken from the error-bound run.
    pub fn set_empirical_eps(&mut self, eps: f64) {
        self.empirical_eps = Some(eps);
    }

    fn reps(&self, default: usize) -> usize {
        self.reps.unwrap_or(default)
    }

    fn seed_for(&self, name: CheckName) -> u64 {
        derive_seed(self.seed, name.as_str())
    }

    pub fn run(&mut self, name: CheckName) -> Result<CheckReport> {
        let seed = self.seed_for(name);
        let p = self.params.clone();
        match name {
            CheckName::Exactness => exactness_check(p.exactness_instances, p.exactness_tolerance, seed),
            CheckName::TraceMinimality => self.trace_minimality(seed),
            CheckName::McVariance => self.mc_variance(seed),
            CheckName::ErrorBound => {
                let report = self.error_bound(seed)?;
                self.empirical_eps = Some(report.details["q90_error"]);
                Ok(report)
            }
            CheckName::RiskBound => {
                let eps = match self.empirical_eps {
                    Some(e) => e,
                    None => {
                        let report = self.error_bound(self.seed_for(CheckName::ErrorBound))?;
                        let e = report.details["q90_error"];
                        self.empirical_eps = Some(e);
                        e
                    }
                };
                risk_bound_check(
                    &risk_instances(p.risk_instances, derive_seed(seed, "instances")),
                    p.risk_lambda,
                    eps,
                    p.bound_eps,
                    p.bound_delta,
                    self.reps(p.risk_reps),
                    p.risk_fraction,
                    seed,
                )
            }
            CheckName::GeometricDecay => {
                let data = gen_example1(p.bound_n, p.bound_p, p.bound_lambda, derive_seed(seed, "data"))?;
                let cfg = IterativeConfig::new(p.decay_r, p.decay_r0, p.decay_m, 0);
                let mut report =
                    geometric_decay_check(&data.instance, &cfg, p.decay_runs, p.decay_ratio, p.decay_ratio_steps, seed)?;
                let needed = iterations_needed(0.5, 1e-3)?;
                report.details.insert("iterations_needed_0.5_1e-3".into(), needed as f64);
                report.passed &= needed == 10;
                Ok(report)
            }
            CheckName::IterativeErrorBound => {
                let data = gen_example1(p.bound_n, p.bound_p, p.bound_lambda, derive_seed(seed, "data"))?;
                let cfg = IterativeConfig::new(p.decay_r, p.decay_r0, p.iterative_m, 0);
                iterative_error_bound_check(
                    &data.instance,
                    &cfg,
                    p.bound_eps,
                    p.bound_delta,
                    self.reps(p.iterative_reps),
                    seed,
                )
            }
        }
    }

    fn trace_minimality(&self, seed: u64) -> Result<CheckReport> {
        let p = &self.params;
        let mut g = rng::seeded(derive_seed(seed, "instances"));
        let mut violations = 0.0;
        let mut worst_gap: f64 = 0.0;
        for k in 0..p.trace_instances {
            let a = Matrix::from_fn(p.trace_n, p.trace_p, |_, _| StandardNormal.sample(&mut g));
            let y = Vector::from_fn(p.trace_n, |_, _| StandardNormal.sample(&mut g));
            let inst = ProblemInstance::new(a, y, 1.0)?;
            let r = trace_minimality_check(&inst, p.trace_trials, derive_seed(seed, &format!("trials/{k}")))?;
            violations += r.statistic;
            worst_gap = worst_gap.max(r.details["bound_gap"]);
        }
        let mut report = CheckReport {
            name: CheckName::TraceMinimality.to_string(),
            passed: violations == 0.0 && worst_gap <= 1e-12,
            statistic: violations,
            threshold: 0.0,
            sample_sizes: [
                ("instances".to_string(), p.trace_instances as u64),
                ("trials".to_string(), p.trace_trials as u64),
            ]
            .into(),
            seed,
            details: Default::default(),
        };
        report.details.insert("worst_bound_gap".into(), worst_gap);
        Ok(report)
    }

    fn mc_variance(&self, seed: u64) -> Result<CheckReport> {
        let p = &self.params;
        let data = gen_example1(p.variance_n, p.variance_p, p.variance_lambda, derive_seed(seed, "data"))?;
        let exact = ridge_exact(&data.instance)?;
        let probs = probs_coefficient_weighted(data.instance.a(), exact.beta.as_slice(), Scheme::Opl)?;
        let reps = self.reps(p.variance_reps);
        let mut report = mc_variance_check(&data.instance, &probs, p.variance_r, reps, p.variance_tolerance, seed)?;
        let mut distances = Vec::new();
        for &r in &p.variance_r_grid {
            let d = if r == p.variance_r {
                report.statistic
            } else {
                mc_variance_check(&data.instance, &probs, r, reps, p.variance_tolerance, seed)?.statistic
            };
            report.details.insert(format!("distance_r{r}"), d);
            distances.push(d);
        }
        let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
        report.details.insert("monotone".into(), if monotone { 1.0 } else { 0.0 });
        report.passed &= monotone;
        Ok(report)
    }

    fn error_bound(&self, seed: u64) -> Result<CheckReport> {
        let p = &self.params;
        let data = gen_example1(p.bound_n, p.bound_p, p.bound_lambda, derive_seed(seed, "data"))?;
        let exact = ridge_exact(&data.instance)?;
        let probs = probs_coefficient_weighted(data.instance.a(), exact.beta.as_slice(), Scheme::Opl)?;
        let rank = thin_svd(data.instance.a())?.rank();
        let recommended = recommended_sample_size(rank, p.bound_eps, p.bound_delta, p.bound_kappa)?;
        let r = recommended.min(p.bound_p);
        let mut report = error_bound_check(
            &data.instance,
            &probs,
            r,
            p.bound_eps,
            p.bound_delta,
            self.reps(p.bound_reps),
            seed,
        )?;
        report.details.insert("rank".into(), rank as f64);
        report.details.insert("recommended_r".into(), recommended as f64);
        Ok(report)
    }
}

/// Runs the configured checks in order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut suite = Suite::new(cfg);
    cfg.checks.iter().map(|&c| suite.run(c)).collect()
}
