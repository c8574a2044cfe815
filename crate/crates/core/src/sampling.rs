//! Column-sampling probabilities and with-replacement sampling plans.

use std::fmt;
use std::str::FromStr;

use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms_sq, Matrix, SvdFactors};
use crate::rng;

/// Which rule produced a probability vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Uni,
    Col,
    Lev,
    Rlev,
    Opl,
    Nopl,
    Rsis,
    Custom,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Uni,
        Scheme::Col,
        Scheme::Lev,
        Scheme::Rlev,
        Scheme::Opl,
        Scheme::Nopl,
        Scheme::Rsis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Uni => "UNI",
            Scheme::Col => "COL",
            Scheme::Lev => "LEV",
            Scheme::Rlev => "RLEV",
            Scheme::Opl => "OPL",
            Scheme::Nopl => "NOPL",
            Scheme::Rsis => "RSIS",
            Scheme::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UNI" => Ok(Scheme::Uni),
            "COL" => Ok(Scheme::Col),
            "LEV" => Ok(Scheme::Lev),
            "RLEV" => Ok(Scheme::Rlev),
            "OPL" => Ok(Scheme::Opl),
            "NOPL" => Ok(Scheme::Nopl),
            "RSIS" => Ok(Scheme::Rsis),
            "CUSTOM" => Ok(Scheme::Custom),
            _ => Err(Error::InvalidArgument(format!("unknown sampling scheme {s:?}"))),
        }
    }
}

/// A distribution over the `p` features: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
    scheme: Scheme,
}

impl ProbabilityVector {
    /// Normalizes non-negative weights. Fails when every weight is zero.
    pub fn from_weights(weights: Vec<f64>, scheme: Scheme) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("probability vector over zero features".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {} (must be finite and non-negative)",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{scheme} weights are all zero"
            )));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { probs, scheme })
    }

    /// Caller-supplied probabilities; must already sum to one within `1e-9`.
    pub fn custom(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Self::from_weights(probs, Scheme::Custom)
    }

    pub fn uniform(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        Ok(Self {
            probs: vec![1.0 / p as f64; p],
            scheme: Scheme::Uni,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `(1 - theta) pi + theta / p`, keeping the scheme tag.
    pub fn with_uniform_floor(mut self, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidArgument(format!(
                "mixing floor must lie in [0, 1), got {theta}"
            )));
        }
        if theta > 0.0 {
            let floor = theta / self.probs.len() as f64;
            for pi in &mut self.probs {
                *pi = (1.0 - theta) * *pi + floor;
            }
        }
        Ok(self)
    }
}

/// `pi_i = ||A_i||^2 / ||A||_F^2`
pub fn probs_column(a: &Matrix) -> Result<ProbabilityVector> {
    ProbabilityVector::from_weights(column_norms_sq(a), Scheme::Col)
}

/// `pi_i = ||V^i||^2 / rank`
pub fn probs_leverage(svd: &SvdFactors) -> Result<ProbabilityVector> {
    if svd.rank() == 0 {
        return Err(Error::ZeroRank);
    }
    ProbabilityVector::from_weights(svd.leverage_scores(), Scheme::Lev)
}

/// Ridge leverage: row norms of `V diag(sqrt(sigma^2 / (sigma^2 + lambda)))`.
pub fn probs_ridge_leverage(svd: &SvdFactors, lambda: f64) -> Result<ProbabilityVector> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if svd.rank() == 0 {
        return Err(Error::ZeroRank);
    }
    let damp: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s * s / (s * s + lambda))
        .collect();
    let weights = svd
        .v
        .row_iter()
        .map(|row| row.iter().zip(&damp).map(|(v, d)| v * v * d).sum())
        .collect();
    ProbabilityVector::from_weights(weights, Scheme::Rlev)
}

/// `pi_i ∝ |coef_i| * ||A_i||`. OPL when `coef` is the exact ridge solution,
/// NOPL when it is a pilot estimate.
pub fn probs_coefficient_weighted(a: &Matrix, coef: &[f64], scheme: Scheme) -> Result<ProbabilityVector> {
    let norms: Vec<f64> = column_norms_sq(a).into_iter().map(f64::sqrt).collect();
    probs_coefficient_weighted_with_norms(&norms, coef, scheme)
}

/// As [`probs_coefficient_weighted`] with precomputed column norms.
pub fn probs_coefficient_weighted_with_norms(
    col_norms: &[f64],
    coef: &[f64],
    scheme: Scheme,
) -> Result<ProbabilityVector> {
    if col_norms.len() != coef.len() {
        return Err(Error::Dimension(format!(
            "{} column norms but {} coefficients",
            col_norms.len(),
            coef.len()
        )));
    }
    let weights = coef.iter().zip(col_norms).map(|(c, n)| c.abs() * n).collect();
    ProbabilityVector::from_weights(weights, scheme)
}

/// `pi_i ∝ |coef_i|`
pub fn probs_rsis(coef: &[f64]) -> Result<ProbabilityVector> {
    ProbabilityVector::from_weights(coef.iter().map(|c| c.abs()).collect(), Scheme::Rsis)
}

/// The drawn columns of one sketch, with their `1/sqrt(r pi)` weights.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    probs: ProbabilityVector,
    draws: Vec<usize>,
    weights: Vec<f64>,
    seed: u64,
}

impl SamplingPlan {
    /// Builds a plan from explicit (0-based) draws.
    pub fn from_draws(probs: ProbabilityVector, draws: Vec<usize>, seed: u64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let r = draws.len() as f64;
        let mut weights = Vec::with_capacity(draws.len());
        for (t, &i) in draws.iter().enumerate() {
            let pi = *probs.as_slice().get(i).ok_or_else(|| {
                Error::MalformedPlan(format!("draw {t} selects feature {i}, only {} exist", probs.len()))
            })?;
            if !(pi > 0.0) {
                return Err(Error::MalformedPlan(format!(
                    "draw {t} selects feature {i} which has zero probability"
                )));
            }
            weights.push(1.0 / (r * pi).sqrt());
        }
        Ok(Self {
            probs,
            draws,
            weights,
            seed,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(
        probs: ProbabilityVector,
        draws: Vec<usize>,
        weights: Vec<f64>,
        seed: u64,
    ) -> Self {
        Self {
            probs,
            draws,
            weights,
            seed,
        }
    }

    pub fn probs(&self) -> &ProbabilityVector {
        &self.probs
    }

    /// 0-based feature indices, in draw order.
    pub fn draws(&self) -> &[usize] {
        &self.draws
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn r(&self) -> usize {
        self.draws.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Alias table restricted to the features with positive probability, so a
/// zero-mass feature can never be drawn.
pub struct SupportSampler {
    support: Vec<usize>,
    alias: WeightedAliasIndex<f64>,
}

impl SupportSampler {
    pub fn new(probs: &ProbabilityVector) -> Result<Self> {
        let support: Vec<usize> = probs
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &pi)| pi > 0.0)
            .map(|(i, _)| i)
            .collect();
        let weights = support.iter().map(|&i| probs.as_slice()[i]).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidArgument(format!("cannot build alias table: {e}")))?;
        Ok(Self { support, alias })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.support[self.alias.sample(rng)]
    }
}

/// Draws `r` i.i.d. feature indices from `probs`.
pub fn draw_plan(probs: &ProbabilityVector, r: usize, seed: u64) -> Result<SamplingPlan> {
    if r == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let sampler = SupportSampler::new(probs)?;
    let mut rng = rng::seeded(seed);
    let draws = (0..r).map(|_| sampler.sample(&mut rng)).collect();
    SamplingPlan::from_draws(probs.clone(), draws, seed)
}

/// `ceil(32 kappa rho / (3 eps^2) * ln(4 rho / delta))`, where `kappa` stands
/// for the unobservable constant ratio `s2 c2 / (s1 c1)`.
pub fn recommended_sample_size(rank: usize, eps: f64, delta: f64, kappa: f64) -> Result<usize> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa must be at least 1, got {kappa}")));
    }
    Ok(recommended_sample_size_raw(rank, eps, delta, kappa).ceil() as usize)
}

fn recommended_sample_size_raw(rank: usize, eps: f64, delta: f64, kappa: f64) -> f64 {
    let rho = rank as f64;
    32.0 * kappa * rho / (3.0 * eps * eps) * (4.0 * rho / delta).ln()
}
