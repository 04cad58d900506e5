//! One-dimensional region inversion and the implicit critical-value solver.
//!
//! FAB acceptance sets are defined pointwise through a membership predicate
//! whose critical value itself moves with the candidate `y`, so endpoints are
//! implicit. [`invert_membership`] scans a grid and refines every membership
//! change by bisection; nothing is assumed about convexity.

use crate::error::{FabError, Result};
use crate::specfun::{abs_shift_cdf, bisect_increasing, phi, phi_inv, student_cdf};

/// Accepted set of a one-dimensional prediction region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionResult {
    /// Disjoint, sorted `(lo, hi)` pairs.
    pub intervals: Vec<(f64, f64)>,
    pub total_measure: f64,
    /// Number of membership evaluations spent.
    pub n_evals: usize,
    /// True iff the region is exactly one interval.
    pub contiguous: bool,
}

impl RegionResult {
    pub fn from_intervals(intervals: Vec<(f64, f64)>, n_evals: usize) -> Self {
        let total_measure = intervals.iter().map(|(lo, hi)| hi - lo).sum();
        let contiguous = intervals.len() == 1;
        Self {
            intervals,
            total_measure,
            n_evals,
            contiguous,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo < y && y < hi)
    }

    /// Smallest lower and largest upper endpoint.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }
}

/// Knobs for [`invert_membership_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    /// Grid points scanned across the window.
    pub resolution: usize,
    /// Initial window half-width in units of the hint.
    pub window_factor: f64,
    /// Window doublings allowed before declaring the region unbounded.
    pub max_doublings: u32,
    /// Endpoint tolerance relative to the hint.
    pub rel_tol: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            resolution: 2048,
            window_factor: 10.0,
            max_doublings: 6,
            rel_tol: 1e-9,
        }
    }
}

impl InversionOptions {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution,
            ..Self::default()
        }
    }
}

/// `{y : member(y)}` searched on `[center - 10·hint, center + 10·hint]`
/// with `resolution` grid points.
pub fn invert_membership<F>(member: F, center: f64, half_width_hint: f64, resolution: usize) -> Result<RegionResult>
where
    F: Fn(f64) -> bool,
{
    invert_membership_with(member, center, half_width_hint, &InversionOptions::with_resolution(resolution))
}

pub fn invert_membership_with<F>(member: F, center: f64, hint: f64, opts: &InversionOptions) -> Result<RegionResult>
where
    F: Fn(f64) -> bool,
{
    if !(hint > 0.0) || !hint.is_finite() || !center.is_finite() {
        return Err(FabError::domain(
            "invert_membership",
            format!("center {center} and hint {hint} must be finite with hint > 0"),
        ));
    }
    if opts.resolution < 3 {
        return Err(FabError::domain("invert_membership", "resolution must be >= 3"));
    }
    let mut n_evals = 0usize;
    let mut eval = |y: f64| {
        n_evals += 1;
        member(y)
    };

    let mut half = opts.window_factor * hint;
    let mut doublings = 0;
    loop {
        let lo_in = eval(center - half);
        let hi_in = eval(center + half);
        if !lo_in && !hi_in {
            break;
        }
        if doublings == opts.max_doublings {
            return Err(FabError::UnboundedRegion {
                op: "invert_membership",
                half_width: half,
            });
        }
        half *= 2.0;
        doublings += 1;
    }

    let lo = center - half;
    let step = 2.0 * half / (opts.resolution - 1) as f64;
    let tol = opts.rel_tol * hint;
    let grid = |i: usize| if i + 1 == opts.resolution { center + half } else { lo + i as f64 * step };

    let mut intervals = Vec::new();
    let mut open: Option<f64> = None;
    let mut prev_y = grid(0);
    let mut prev_in = false;
    for i in 1..opts.resolution {
        let y = grid(i);
        let now_in = if i + 1 == opts.resolution { false } else { eval(y) };
        if now_in != prev_in {
            // refine the change between prev_y (state prev_in) and y
            let (mut a, mut b) = (prev_y, y);
            while b - a > tol {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if eval(m) == prev_in {
                    a = m;
                } else {
                    b = m;
                }
            }
            let edge = 0.5 * (a + b);
            if now_in {
                open = Some(edge);
            } else if let Some(start) = open.take() {
                intervals.push((start, edge));
            }
        }
        prev_y = y;
        prev_in = now_in;
    }
    Ok(RegionResult::from_intervals(intervals, n_evals))
}

/// Reference distribution of the pivot in the critical-value equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalCdf {
    Normal,
    StudentT(u32),
}

impl CriticalCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            CriticalCdf::Normal => phi(x),
            CriticalCdf::StudentT(df) => student_cdf(x, df as f64),
        }
    }

    /// `F(q - δ) - F(-q - δ)`: the probability that `|S + δ| <= q`.
    pub fn abs_shift_cdf(&self, q: f64, delta: f64) -> f64 {
        abs_shift_cdf(|x| self.cdf(x), q, delta)
    }
}

/// Solve `F(q - δ) - F(-q - δ) = 1 - α` for `q > 0`.
pub fn solve_critical_q(delta: f64, alpha: f64, cdf: CriticalCdf) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FabError::domain("solve_critical_q", format!("alpha = {alpha} not in (0,1)")));
    }
    if !delta.is_finite() {
        return Err(FabError::domain("solve_critical_q", format!("non-finite delta {delta}")));
    }
    if let CriticalCdf::StudentT(0) = cdf {
        return Err(FabError::domain("solve_critical_q", "t critical value needs df >= 1"));
    }
    let target = 1.0 - alpha;
    let g = |q: f64| cdf.abs_shift_cdf(q, delta);
    let mut hi = delta.abs() + phi_inv(1.0 - alpha / 4.0) + 10.0;
    while g(hi) < target {
        hi *= 2.0;
    }
    Ok(bisect_increasing(g, 0.0, hi, target, 1e-12, 1e-15 * hi))
}
