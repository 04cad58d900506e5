//! Neyman-Pearson acceptance sets on finite outcome spaces.
//!
//! Given a probability mass `p` and a risk mass `r` over the same outcomes,
//! the set `{ω : p(ω) > k r(ω)}` has the smallest risk among all sets with at
//! least its probability. This is the exact finite analogue of the FAB
//! acceptance rule and serves as a testing oracle for the continuous
//! constructions.

use std::cmp::Ordering;

use crate::error::{FabError, Result};

/// Cumulative masses are compared to the target with this slack.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTestProblem<L> {
    outcomes: Vec<L>,
    p_mass: Vec<f64>,
    r_mass: Vec<f64>,
    target: f64,
}

impl<L> FiniteTestProblem<L> {
    pub fn new(outcomes: Vec<L>, p_mass: Vec<f64>, r_mass: Vec<f64>, target: f64) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(FabError::InvalidConfig("no outcomes".into()));
        }
        if p_mass.len() != n {
            return Err(FabError::DimensionMismatch { expected: n, got: p_mass.len() });
        }
        if r_mass.len() != n {
            return Err(FabError::DimensionMismatch { expected: n, got: r_mass.len() });
        }
        if p_mass.iter().any(|&p| !(p >= 0.0)) || r_mass.iter().any(|&r| !(r >= 0.0)) {
            return Err(FabError::InvalidConfig("masses must be nonnegative".into()));
        }
        let total: f64 = p_mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(FabError::InvalidConfig(format!("probability masses sum to {total}, not 1")));
        }
        if !(target > 0.0 && target < 1.0) {
            return Err(FabError::InvalidConfig(format!("target {target} not in (0,1)")));
        }
        Ok(Self {
            outcomes,
            p_mass,
            r_mass,
            target,
        })
    }

    pub fn outcomes(&self) -> &[L] {
        &self.outcomes
    }

    pub fn p_mass(&self) -> &[f64] {
        &self.p_mass
    }

    pub fn r_mass(&self) -> &[f64] {
        &self.r_mass
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Probability and risk of the subset given by `indices`.
    pub fn masses(&self, indices: &[usize]) -> (f64, f64) {
        indices
            .iter()
            .fold((0.0, 0.0), |(p, r), &i| (p + self.p_mass[i], r + self.r_mass[i]))
    }
}

/// Acceptance set returned by [`np_optimal_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct NpSet {
    /// Indices into the problem's outcome list, in order of inclusion.
    pub indices: Vec<usize>,
    pub p: f64,
    pub r: f64,
    /// Likelihood-ratio threshold `k = p/r` of the last outcome included.
    pub threshold: f64,
}

impl NpSet {
    pub fn labels<'a, L>(&self, problem: &'a FiniteTestProblem<L>) -> Vec<&'a L> {
        self.indices.iter().map(|&i| &problem.outcomes[i]).collect()
    }
}

fn ratio(p: f64, r: f64) -> f64 {
    if r == 0.0 {
        if p > 0.0 {
            f64::INFINITY
        } else {
            // contributes nothing to either mass
            -1.0
        }
    } else {
        p / r
    }
}

/// Include outcomes by decreasing `p/r` (zero-risk outcomes first) until the
/// probability target is met. Ratio ties keep input order.
pub fn np_optimal_set<L>(problem: &FiniteTestProblem<L>) -> NpSet {
    let mut order: Vec<usize> = (0..problem.len()).collect();
    let ratios: Vec<f64> = problem
        .p_mass
        .iter()
        .zip(&problem.r_mass)
        .map(|(&p, &r)| ratio(p, r))
        .collect();
    order.sort_by(|&a, &b| ratios[b].partial_cmp(&ratios[a]).unwrap_or(Ordering::Equal));

    let mut indices = Vec::new();
    let (mut p, mut r) = (0.0, 0.0);
    let mut threshold = f64::INFINITY;
    for i in order {
        if p >= problem.target - MASS_TOL {
            break;
        }
        indices.push(i);
        p += problem.p_mass[i];
        r += problem.r_mass[i];
        threshold = ratios[i];
    }
    NpSet { indices, p, r, threshold }
}
