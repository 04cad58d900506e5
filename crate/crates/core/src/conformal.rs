//! Conformal FAB prediction for an i.i.d. real sample.
//!
//! A candidate `y_{n+1}` is scored together with the data: `c_i` is the
//! conformity of the `i`-th point given the other `n` points, and the
//! candidate is kept unless its score is among the `k` smallest. With the
//! posterior predictive density as the score the region is Bayes-optimal
//! among sets with conformal coverage `1 - k/(n+1)`.

use num_rational::Ratio;

use crate::error::{FabError, Result};
use crate::normal::PriorScale;
use crate::region::{invert_membership_with, InversionOptions, RegionResult};

/// Conjugate prior `θ ~ N(m, λσ²)` for `y_i ~ N(θ, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPrior {
    pub m: f64,
    pub lambda: PriorScale,
    pub sigma2: f64,
}

impl NormalPrior {
    pub fn new(m: f64, lambda: PriorScale, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(FabError::InvalidConfig(format!("sigma2 = {sigma2} must be positive")));
        }
        if let PriorScale::Finite(l) = lambda {
            if !(l > 0.0) {
                return Err(FabError::InvalidConfig(format!("lambda = {l} must be positive")));
            }
        }
        if !m.is_finite() {
            return Err(FabError::InvalidConfig(format!("prior mean {m} must be finite")));
        }
        Ok(Self { m, lambda, sigma2 })
    }

    /// Predictive mean and variance of a new point given `n` points summing to `sum`.
    pub fn predictive(&self, sum: f64, n: usize) -> (f64, f64) {
        let nf = n as f64;
        let (prec, num) = match self.lambda {
            PriorScale::Infinite => (nf / self.sigma2, sum / self.sigma2),
            PriorScale::Finite(l) => (
                nf / self.sigma2 + 1.0 / (l * self.sigma2),
                sum / self.sigma2 + self.m / (l * self.sigma2),
            ),
        };
        (num / prec, self.sigma2 + 1.0 / prec)
    }

    fn log_density(&self, y: f64, sum: f64, n: usize) -> f64 {
        let (mean, var) = self.predictive(sum, n);
        let d = y - mean;
        -0.5 * (d * d / var + (2.0 * std::f64::consts::PI * var).ln())
    }
}

/// Posterior predictive density of `y_new` given `sample`.
pub fn postpred_density(y_new: f64, sample: &[f64], prior: &NormalPrior) -> Result<f64> {
    if sample.is_empty() {
        return Err(FabError::domain("postpred_density", "sample is empty"));
    }
    Ok(prior.log_density(y_new, sample.iter().sum(), sample.len()).exp())
}

/// Conformity score of a point given the rest of the sample. Only the
/// ordering of scores matters.
pub trait ConformityScore: Sync {
    fn score(&self, y: f64, others: &[f64]) -> f64;

    /// `c_j = score(z_j, z without z_j)` for every point of `z`.
    fn vector(&self, z: &[f64]) -> Vec<f64> {
        let mut rest = Vec::with_capacity(z.len().saturating_sub(1));
        (0..z.len())
            .map(|j| {
                rest.clear();
                rest.extend(z.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v));
                self.score(z[j], &rest)
            })
            .collect()
    }
}

/// Log posterior predictive density under a [`NormalPrior`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPredictive(pub NormalPrior);

impl ConformityScore for PosteriorPredictive {
    fn score(&self, y: f64, others: &[f64]) -> f64 {
        self.0.log_density(y, others.iter().sum(), others.len())
    }

    fn vector(&self, z: &[f64]) -> Vec<f64> {
        let total: f64 = z.iter().sum();
        let n = z.len() - 1;
        z.iter().map(|&y| self.0.log_density(y, total - y, n)).collect()
    }
}

/// `-|y - mean(others)|`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NegAbsDeviation;

impl ConformityScore for NegAbsDeviation {
    fn score(&self, y: f64, others: &[f64]) -> f64 {
        -(y - others.iter().sum::<f64>() / others.len() as f64).abs()
    }

    fn vector(&self, z: &[f64]) -> Vec<f64> {
        let total: f64 = z.iter().sum();
        let n = z.len() as f64 - 1.0;
        z.iter().map(|&y| -(y - (total - y) / n).abs()).collect()
    }
}

/// Any `Fn(y, others) -> score`.
pub struct FnScore<F>(pub F);

impl<F: Fn(f64, &[f64]) -> f64 + Sync> ConformityScore for FnScore<F> {
    fn score(&self, y: f64, others: &[f64]) -> f64 {
        (self.0)(y, others)
    }
}

/// The two built-in scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    PostPred,
    NegAbsDev,
}

/// Scores of `y₁..y_n, y_{n+1}`; the candidate is last.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformityVector {
    pub c: Vec<f64>,
}

impl ConformityVector {
    pub fn compute<S: ConformityScore + ?Sized>(score: &S, data: &[f64], y_new: f64) -> Self {
        let mut z = Vec::with_capacity(data.len() + 1);
        z.extend_from_slice(data);
        z.push(y_new);
        Self { c: score.vector(&z) }
    }

    pub fn candidate(&self) -> f64 {
        self.c[self.c.len() - 1]
    }

    /// `#{j <= n : c_j <= c_{n+1}}`.
    pub fn rank_below_candidate(&self) -> usize {
        let last = self.candidate();
        self.c[..self.c.len() - 1].iter().filter(|&&c| c <= last).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalConfig {
    data: Vec<f64>,
    prior: NormalPrior,
    k_level: usize,
}

impl ConformalConfig {
    /// `k_level = 0` is accepted and yields the trivial region ℝ.
    pub fn new(data: Vec<f64>, prior: NormalPrior, k_level: usize) -> Result<Self> {
        if data.len() < 2 {
            return Err(FabError::InvalidConfig("conformal prediction needs at least two observations".into()));
        }
        if data.iter().any(|y| !y.is_finite()) {
            return Err(FabError::InvalidConfig("data must be finite".into()));
        }
        if k_level > data.len() {
            return Err(FabError::InvalidConfig(format!(
                "k_level = {k_level} exceeds n = {}",
                data.len()
            )));
        }
        Ok(Self { data, prior, k_level })
    }

    /// Resolve `α = k/(n+1)`; any other α is rejected with its nearest
    /// feasible neighbours.
    pub fn with_alpha(data: Vec<f64>, prior: NormalPrior, alpha: f64) -> Result<Self> {
        let n = data.len();
        let n1 = (n + 1) as f64;
        let kf = alpha * n1;
        let k = kf.round();
        if (kf - k).abs() > 1e-9 || k < 1.0 || k > n as f64 {
            let below = (kf.floor().clamp(1.0, n as f64)) / n1;
            let above = (kf.ceil().clamp(1.0, n as f64)) / n1;
            return Err(FabError::InfeasibleAlpha { alpha, n, below, above });
        }
        Self::new(data, prior, k as usize)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn prior(&self) -> &NormalPrior {
        &self.prior
    }

    pub fn k_level(&self) -> usize {
        self.k_level
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn alpha(&self) -> f64 {
        self.k_level as f64 / (self.n() + 1) as f64
    }

    pub fn has_ties(&self) -> bool {
        has_ties(&self.data)
    }

    pub fn predictive(&self) -> (f64, f64) {
        self.prior.predictive(self.data.iter().sum(), self.n())
    }

    pub fn score(&self, kind: ScoreKind) -> Box<dyn ConformityScore> {
        match kind {
            ScoreKind::PostPred => Box::new(PosteriorPredictive(self.prior)),
            ScoreKind::NegAbsDev => Box::new(NegAbsDeviation),
        }
    }

    /// Candidate kept iff at least `k` data scores are `<=` its own.
    pub fn member<S: ConformityScore + ?Sized>(&self, score: &S, y: f64) -> bool {
        ConformityVector::compute(score, &self.data, y).rank_below_candidate() >= self.k_level
    }
}

fn has_ties(z: &[f64]) -> bool {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

pub fn conformal_region(cfg: &ConformalConfig, kind: ScoreKind) -> Result<RegionResult> {
    conformal_region_with(cfg, cfg.score(kind).as_ref(), &InversionOptions::default())
}

pub fn conformal_region_with<S: ConformityScore + ?Sized>(
    cfg: &ConformalConfig,
    score: &S,
    opts: &InversionOptions,
) -> Result<RegionResult> {
    let (mean, var) = cfg.predictive();
    invert_membership_with(|y| cfg.member(score, y), mean, var.sqrt(), opts)
}

/// Fraction of held-out assignments accepted by the rank rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCoverage {
    pub coverage: Ratio<u64>,
    /// Ties among the augmented points or their scores.
    pub ties: bool,
}

/// Enumerate which point of `{y₁..y_n, augmented}` plays `y_{n+1}`: each of
/// the `n+1` assignments is equally likely under exchangeability.
pub fn exact_conditional_coverage<S: ConformityScore + ?Sized>(
    cfg: &ConformalConfig,
    score: &S,
    augmented: f64,
) -> ExactCoverage {
    let mut z = cfg.data.clone();
    z.push(augmented);
    // scores are symmetric in the conditioning set, so one vector serves all assignments
    let c = score.vector(&z);
    let accepted = (0..z.len())
        .filter(|&i| (0..z.len()).filter(|&j| j != i && c[j] <= c[i]).count() >= cfg.k_level)
        .count();
    ExactCoverage {
        coverage: Ratio::new(accepted as u64, z.len() as u64),
        ties: has_ties(&z) || has_ties(&c),
    }
}
