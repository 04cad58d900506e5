//! FAB prediction regions for the multivariate normal model.
//!
//! `X ~ N_p(θ, kΣ)` and `Y ~ N_p(θ, Σ)` are independent and the prior is
//! `θ ~ N_p(μ, λΣ)`. Given `Z = (X + kY)/(1 + k)`, a candidate `y` is accepted
//! when
//!
//! ```text
//! || Σ^{-1/2}(x - y)/√(k+1) + δ_z ||²  <  χ²_{p, ||δ_z||², 1-α}
//! δ_z = Σ^{-1/2}(μ - z) √v / (v_λ - v),   v = k²/(k+1),   v_λ = k + λ
//! ```
//!
//! which has exact `1 - α` coverage for every θ. With `λ = ∞` the shift is
//! zero and the region is the usual pivotal one.
//!
//! Two different quantities share the name `v_λ` in the literature on this
//! construction: the prior predictive factor of `X` (`k + λ`, used by `δ_z`)
//! and the predictive factor of `Y - θ̂` (`(λ(k+1) + k)/(k + λ)`, used by the
//! posterior-mean form of the statistic). They are kept apart as
//! [`NormalFabConfig::v_lambda_x`] and [`NormalFabConfig::v_lambda_y`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{FabError, Result};
use crate::region::{invert_membership_with, InversionOptions, RegionResult};
use crate::specfun::{abs_shift_cdf, ncchisq_cdf_raw, ncchisq_quantile, student_cdf, NoncentralChiSq, ShiftedTSq};

/// Prior variance multiplier `λ`; `Infinite` gives the pivotal region exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorScale {
    Finite(f64),
    Infinite,
}

impl PriorScale {
    pub fn from_f64(lambda: f64) -> Self {
        if lambda.is_infinite() && lambda > 0.0 {
            PriorScale::Infinite
        } else {
            PriorScale::Finite(lambda)
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            PriorScale::Finite(l) => l,
            PriorScale::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, PriorScale::Infinite)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PriorScale::Finite(l) if !(l > 0.0) || !l.is_finite() => {
                Err(FabError::InvalidConfig(format!("lambda = {l} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for PriorScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriorScale::Finite(l) => write!(f, "{l}"),
            PriorScale::Infinite => write!(f, "inf"),
        }
    }
}

/// `Z = (X + kY)/(1 + k)`, the complete sufficient statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientPoint {
    pub z: DVector<f64>,
}

impl SufficientPoint {
    pub fn new(x: &DVector<f64>, y: &DVector<f64>, k: f64) -> Self {
        Self {
            z: (x + y * k) / (1.0 + k),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FabError::InvalidConfig(format!("alpha = {alpha} not in (0,1)")))
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn spd_cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(FabError::NotPositiveDefinite { what });
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(FabError::NotPositiveDefinite { what });
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(FabError::NotPositiveDefinite { what })
}

fn lower_inverse(l: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    l.clone().try_inverse().ok_or(FabError::NotPositiveDefinite { what })
}

/// Model and prior for the known-Σ normal FAB region. Immutable once built.
#[derive(Debug, Clone)]
pub struct NormalFabConfig {
    p: usize,
    k: f64,
    sigma: DMatrix<f64>,
    sigma_half: DMatrix<f64>,
    sigma_inv_half: DMatrix<f64>,
    mu: DVector<f64>,
    lambda: PriorScale,
    alpha: f64,
    v: f64,
    delta_scale: f64,
}

impl NormalFabConfig {
    pub fn new(k: f64, sigma: DMatrix<f64>, mu: DVector<f64>, lambda: PriorScale, alpha: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(FabError::InvalidConfig(format!("k = {k} must be positive")));
        }
        lambda.validate()?;
        check_alpha(alpha)?;
        let p = sigma.nrows();
        if p == 0 {
            return Err(FabError::InvalidConfig("dimension must be >= 1".into()));
        }
        if mu.len() != p {
            return Err(FabError::DimensionMismatch { expected: p, got: mu.len() });
        }
        let sigma_half = spd_cholesky(&sigma, "Sigma")?;
        let sigma_inv_half = lower_inverse(&sigma_half, "Sigma")?;
        let v = k * k / (k + 1.0);
        let delta_scale = match lambda {
            PriorScale::Finite(l) => v.sqrt() / (k + l - v),
            PriorScale::Infinite => 0.0,
        };
        Ok(Self {
            p,
            k,
            sigma,
            sigma_half,
            sigma_inv_half,
            mu,
            lambda,
            alpha,
            v,
            delta_scale,
        })
    }

    /// One-dimensional model with variance `sigma2`.
    pub fn scalar(k: f64, sigma2: f64, mu: f64, lambda: PriorScale, alpha: f64) -> Result<Self> {
        Self::new(k, DMatrix::from_element(1, 1, sigma2), DVector::from_element(1, mu), lambda, alpha)
    }

    /// `Σ = sigma2 · I_p`.
    pub fn isotropic(p: usize, k: f64, sigma2: f64, mu: DVector<f64>, lambda: PriorScale, alpha: f64) -> Result<Self> {
        Self::new(k, DMatrix::identity(p, p) * sigma2, mu, lambda, alpha)
    }

    /// Replace the lower Cholesky `Σ^{1/2}` by another factor `F` with `F Fᵀ = Σ`.
    pub fn with_sigma_factor(mut self, factor: DMatrix<f64>) -> Result<Self> {
        if factor.shape() != (self.p, self.p) {
            return Err(FabError::DimensionMismatch {
                expected: self.p,
                got: factor.nrows(),
            });
        }
        let recon = &factor * factor.transpose();
        if (&recon - &self.sigma).amax() > 1e-9 * self.sigma.amax().max(1.0) {
            return Err(FabError::InvalidConfig("factor does not reproduce Sigma".into()));
        }
        self.sigma_inv_half = factor
            .clone()
            .try_inverse()
            .ok_or(FabError::NotPositiveDefinite { what: "Sigma factor" })?;
        self.sigma_half = factor;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_half(&self) -> &DMatrix<f64> {
        &self.sigma_half
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn lambda(&self) -> PriorScale {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `v = k²/(k+1)`, the variance factor of `X` given `Z`.
    pub fn v(&self) -> f64 {
        self.v
    }

    /// Prior predictive variance factor of `X`: `k + λ` (∞ for the flat limit).
    pub fn v_lambda_x(&self) -> f64 {
        self.k + self.lambda.as_f64()
    }

    /// Predictive variance factor of `Y - θ̂`: `(λ(k+1) + k)/(k + λ)`, `k + 1` at `λ = ∞`.
    pub fn v_lambda_y(&self) -> f64 {
        match self.lambda {
            PriorScale::Finite(l) => (l * (self.k + 1.0) + self.k) / (self.k + l),
            PriorScale::Infinite => self.k + 1.0,
        }
    }

    /// Largest marginal standard deviation scale `sqrt(λ_max(Σ))`.
    pub fn sigma_max(&self) -> f64 {
        if self.p == 1 {
            return self.sigma[(0, 0)].sqrt();
        }
        self.sigma.clone().symmetric_eigenvalues().max().sqrt()
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() == self.p {
            Ok(())
        } else {
            Err(FabError::DimensionMismatch {
                expected: self.p,
                got: v.len(),
            })
        }
    }

    /// Noncentrality direction `δ_z`.
    pub fn delta_z(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        if self.lambda.is_infinite() {
            return Ok(DVector::zeros(self.p));
        }
        Ok(&self.sigma_inv_half * (&self.mu - z) * self.delta_scale)
    }

    /// FAB statistic and its noncentrality `(t, ||δ_z||²)` at `z = Z(x, y)`.
    /// Allocation-free.
    pub(crate) fn stat_nc(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let p = self.p;
        let k = self.k;
        let root = (k + 1.0).sqrt();
        let mut stat = 0.0;
        let mut nc = 0.0;
        for i in 0..p {
            let mut a = 0.0;
            let mut d = 0.0;
            for j in 0..=i {
                let li = self.sigma_inv_half[(i, j)];
                a += li * (x[j] - y[j]) / root;
                let z = (x[j] + k * y[j]) / (1.0 + k);
                d += li * (self.mu[j] - z);
            }
            // sigma_inv_half may be a full matrix after `with_sigma_factor`
            for j in (i + 1)..p {
                let li = self.sigma_inv_half[(i, j)];
                if li != 0.0 {
                    a += li * (x[j] - y[j]) / root;
                    let z = (x[j] + k * y[j]) / (1.0 + k);
                    d += li * (self.mu[j] - z);
                }
            }
            d *= self.delta_scale;
            stat += (a + d) * (a + d);
            nc += d * d;
        }
        (stat, nc)
    }

    pub(crate) fn member_raw(&self, x: &[f64], y: &[f64]) -> bool {
        let (stat, nc) = self.stat_nc(x, y);
        ncchisq_cdf_raw(stat, self.p as f64, nc) < 1.0 - self.alpha
    }

    /// FAB statistic `||Σ^{-1/2}(x - y)/√(k+1) + δ_{Z(x,y)}||²`.
    pub fn statistic(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.stat_nc(x.as_slice(), y.as_slice()).0)
    }

    /// Posterior mean `θ̂ = (x/k + μ/λ)/(1/k + 1/λ)`.
    pub fn posterior_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.lambda {
            PriorScale::Finite(l) => (x / self.k + &self.mu / l) / (1.0 / self.k + 1.0 / l),
            PriorScale::Infinite => x.clone(),
        }
    }

    /// The same statistic written around the posterior mean:
    /// `||Σ^{-1/2}(y - θ̂)||²/v_λy · (k+1)/v_λy`.
    pub fn statistic_posterior_form(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let vy = self.v_lambda_y();
        let r = &self.sigma_inv_half * (y - self.posterior_mean(x));
        Ok(r.norm_squared() / vy * (self.k + 1.0) / vy)
    }

    /// Membership in the posterior-mean form of the FAB region; accepts exactly
    /// the same `(x, y)` pairs as [`fab_member`].
    pub fn member_posterior_form(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<bool> {
        let stat = self.statistic_posterior_form(x, y)?;
        let nc = self.delta_z(&SufficientPoint::new(x, y, self.k).z)?.norm_squared();
        Ok(ncchisq_cdf_raw(stat, self.p as f64, nc) < 1.0 - self.alpha)
    }

    /// Membership computed through the explicit noncentral quantile.
    pub fn member_via_quantile(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<bool> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let (stat, nc) = self.stat_nc(x.as_slice(), y.as_slice());
        let q = ncchisq_quantile(1.0 - self.alpha, NoncentralChiSq::new(self.p as u32, nc)?)?;
        Ok(stat < q)
    }

    /// Highest posterior predictive density region (no constant coverage).
    pub fn bayes_member(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<bool> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let vy = self.v_lambda_y();
        let r = &self.sigma_inv_half * (y - self.posterior_mean(x));
        Ok(ncchisq_cdf_raw(r.norm_squared() / vy, self.p as f64, 0.0) < 1.0 - self.alpha)
    }
}

/// `δ_z` for the given configuration.
pub fn delta_z(z: &DVector<f64>, cfg: &NormalFabConfig) -> Result<DVector<f64>> {
    cfg.delta_z(z)
}

/// Is `y` in the FAB region at `x`?
pub fn fab_member(x: &DVector<f64>, y: &DVector<f64>, cfg: &NormalFabConfig) -> Result<bool> {
    cfg.check_dim(x)?;
    cfg.check_dim(y)?;
    Ok(cfg.member_raw(x.as_slice(), y.as_slice()))
}

/// One-dimensional FAB interval at `x`.
pub fn fab_interval_1d(x: f64, cfg: &NormalFabConfig) -> Result<RegionResult> {
    fab_interval_1d_with(x, cfg, &InversionOptions::default())
}

pub fn fab_interval_1d_with(x: f64, cfg: &NormalFabConfig, opts: &InversionOptions) -> Result<RegionResult> {
    if cfg.p != 1 {
        return Err(FabError::DimensionMismatch { expected: 1, got: cfg.p });
    }
    let hint = cfg.sigma[(0, 0)].sqrt() * (cfg.k + 1.0).sqrt();
    invert_membership_with(|y| cfg.member_raw(&[x], &[y]), x, hint, opts)
}

/// Pivotal interval `x ± σ√(k+1) Φ^{-1}(1 - α/2)`.
pub fn pivotal_interval_1d(x: f64, k: f64, sigma2: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let half = (sigma2 * (k + 1.0)).sqrt() * crate::specfun::phi_inv(1.0 - alpha / 2.0);
    Ok((x - half, x + half))
}

/// Area of a two-dimensional region measured by cell counting.
#[derive(Debug, Clone, PartialEq)]
pub struct Region2d {
    pub area: f64,
    /// Area of cells whose 4-neighbourhood has mixed membership.
    pub err_bound: f64,
    /// Accepted cells.
    pub n_cells: usize,
    pub grid_n: usize,
    pub half_width: f64,
    pub n_evals: usize,
}

/// Maximum number of window doublings for [`fab_region_2d`].
pub const MAX_WINDOW_DOUBLINGS: u32 = 6;

/// FAB region for `p = 2` on a `grid_n × grid_n` grid centred at `x`.
pub fn fab_region_2d(x: &DVector<f64>, cfg: &NormalFabConfig, grid_n: usize) -> Result<Region2d> {
    if cfg.p != 2 {
        return Err(FabError::DimensionMismatch { expected: 2, got: cfg.p });
    }
    cfg.check_dim(x)?;
    let xs = [x[0], x[1]];
    region_2d_by_cells(|y| cfg.member_raw(&xs, y), xs, 6.0 * cfg.sigma_max() * (cfg.k + 1.0).sqrt(), grid_n)
}

/// Cell-count area of `{y : member(y)}` around `center`.
pub fn region_2d_by_cells<F>(member: F, center: [f64; 2], half_width: f64, grid_n: usize) -> Result<Region2d>
where
    F: Fn(&[f64]) -> bool + Sync,
{
    if grid_n < 3 {
        return Err(FabError::domain("fab_region_2d", "grid_n must be >= 3"));
    }
    let mut half = half_width;
    let mut n_evals = 0usize;
    for doubling in 0..=MAX_WINDOW_DOUBLINGS {
        let cell = 2.0 * half / grid_n as f64;
        let coord = |i: usize, c: f64| c - half + (i as f64 + 0.5) * cell;
        let at = |i: usize, j: usize| member(&[coord(i, center[0]), coord(j, center[1])]);

        let ring_hit = (0..grid_n).any(|t| {
            at(t, 0) || at(t, grid_n - 1) || at(0, t) || at(grid_n - 1, t)
        });
        n_evals += 4 * grid_n;
        if ring_hit {
            if doubling == MAX_WINDOW_DOUBLINGS {
                return Err(FabError::UnboundedRegion {
                    op: "fab_region_2d",
                    half_width: half,
                });
            }
            half *= 2.0;
            continue;
        }

        let rows: Vec<Vec<bool>> = (0..grid_n)
            .into_par_iter()
            .map(|i| (0..grid_n).map(|j| at(i, j)).collect())
            .collect();
        n_evals += grid_n * grid_n;

        let mut n_cells = 0usize;
        let mut boundary = 0usize;
        for i in 0..grid_n {
            for j in 0..grid_n {
                let m = rows[i][j];
                if m {
                    n_cells += 1;
                }
                let mixed = (i > 0 && rows[i - 1][j] != m)
                    || (i + 1 < grid_n && rows[i + 1][j] != m)
                    || (j > 0 && rows[i][j - 1] != m)
                    || (j + 1 < grid_n && rows[i][j + 1] != m);
                if mixed {
                    boundary += 1;
                }
            }
        }
        let cell_area = cell * cell;
        return Ok(Region2d {
            area: n_cells as f64 * cell_area,
            err_bound: boundary as f64 * cell_area,
            n_cells,
            grid_n,
            half_width: half,
            n_evals,
        });
    }
    unreachable!("loop returns on every path")
}

// ---------------------------------------------------------------------------
// Estimated covariance
// ---------------------------------------------------------------------------

/// Prior and level for the estimated-Σ region (everything but Σ itself).
#[derive(Debug, Clone, PartialEq)]
pub struct EstVarParams {
    pub k: f64,
    pub mu: DVector<f64>,
    pub lambda: PriorScale,
    pub alpha: f64,
}

/// Approximately optimal FAB region when Σ is estimated by `Σ̂` with
/// `ν Σ̂ ~ Wishart(ν, Σ)`, using an independent `Σ̃` inside the shift.
///
/// For `p = 1` the pivot is Student-t and the threshold is exact; otherwise
/// it is an empirical quantile from seeded draws of the pivot.
#[derive(Debug, Clone)]
pub struct EstVarFab {
    params: EstVarParams,
    nu: u32,
    tilde_inv_half: DMatrix<f64>,
    delta_scale: f64,
    pivot: Option<ShiftedTSq>,
}

impl EstVarFab {
    pub fn new(params: EstVarParams, tilde_sigma: &DMatrix<f64>, nu: u32, reps: usize, seed: u64) -> Result<Self> {
        let p = params.mu.len();
        if !(params.k > 0.0) {
            return Err(FabError::InvalidConfig(format!("k = {} must be positive", params.k)));
        }
        params.lambda.validate()?;
        check_alpha(params.alpha)?;
        if nu < 1 {
            return Err(FabError::InvalidConfig("nu must be >= 1".into()));
        }
        if tilde_sigma.nrows() != p {
            return Err(FabError::DimensionMismatch {
                expected: p,
                got: tilde_sigma.nrows(),
            });
        }
        let tilde_inv_half = lower_inverse(&spd_cholesky(tilde_sigma, "tilde Sigma")?, "tilde Sigma")?;
        let k = params.k;
        let v = k * k / (k + 1.0);
        let delta_scale = match params.lambda {
            PriorScale::Finite(l) => v.sqrt() / (k + l - v),
            PriorScale::Infinite => 0.0,
        };
        let pivot = if p > 1 {
            Some(ShiftedTSq::simulate(p, nu, reps, seed)?)
        } else {
            if reps < crate::specfun::MIN_SHIFTED_T_REPS {
                return Err(FabError::domain("fab_member_estvar", format!("reps = {reps} too small")));
            }
            None
        };
        Ok(Self {
            params,
            nu,
            tilde_inv_half,
            delta_scale,
            pivot,
        })
    }

    pub fn params(&self) -> &EstVarParams {
        &self.params
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    /// `δ̃_z`, built with `Σ̃` in place of Σ.
    pub fn delta_tilde(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.tilde_inv_half * (&self.params.mu - z) * self.delta_scale
    }

    /// Is `y` accepted given `X = (θ̂, Σ̂)`?
    pub fn member(&self, theta_hat: &DVector<f64>, sigma_hat: &DMatrix<f64>, y: &DVector<f64>) -> Result<bool> {
        let p = self.params.mu.len();
        for len in [theta_hat.len(), y.len(), sigma_hat.nrows()] {
            if len != p {
                return Err(FabError::DimensionMismatch { expected: p, got: len });
            }
        }
        if p == 1 {
            let s2 = sigma_hat[(0, 0)];
            if !(s2 > 0.0) {
                return Err(FabError::NotPositiveDefinite { what: "Sigma hat" });
            }
            return Ok(self.member_1d(theta_hat[0], s2, y[0]));
        }
        // Σ̂^{-1/2} = Cᵀ with C C ᵀ = Σ̂^{-1}, C lower
        let inv = spd_cholesky(sigma_hat, "Sigma hat")?;
        let inv = lower_inverse(&inv, "Sigma hat")?;
        let sigma_hat_inv = inv.transpose() * &inv;
        let c = spd_cholesky(&sigma_hat_inv, "Sigma hat inverse")?;
        let k = self.params.k;
        let t = c.transpose() * (theta_hat - y) / (k + 1.0).sqrt();
        let z = SufficientPoint::new(theta_hat, y, k).z;
        let delta = self.delta_tilde(&z);
        let stat = (t + &delta).norm_squared();
        let pivot = self.pivot.as_ref().expect("pivot draws exist for p > 1");
        let q = pivot.quantile(delta.as_slice(), 1.0 - self.params.alpha)?;
        Ok(stat < q)
    }

    pub(crate) fn member_1d(&self, theta_hat: f64, sigma_hat2: f64, y: f64) -> bool {
        let k = self.params.k;
        let z = (theta_hat + k * y) / (1.0 + k);
        let delta = self.tilde_inv_half[(0, 0)] * (self.params.mu[0] - z) * self.delta_scale;
        let t = (theta_hat - y) / (sigma_hat2.sqrt() * (k + 1.0).sqrt());
        let s = (t + delta).abs();
        let nu = self.nu as f64;
        abs_shift_cdf(|x| student_cdf(x, nu), s, delta) < 1.0 - self.params.alpha
    }

    /// One-dimensional region for observed `(θ̂, σ̂²)`.
    pub fn interval_1d(&self, theta_hat: f64, sigma_hat2: f64, opts: &InversionOptions) -> Result<RegionResult> {
        if self.params.mu.len() != 1 {
            return Err(FabError::DimensionMismatch {
                expected: 1,
                got: self.params.mu.len(),
            });
        }
        let hint = (sigma_hat2 * (self.params.k + 1.0)).sqrt();
        invert_membership_with(|y| self.member_1d(theta_hat, sigma_hat2, y), theta_hat, hint, opts)
    }
}

/// One-shot estimated-Σ membership; builds the pivot distribution each call.
#[allow(clippy::too_many_arguments)]
pub fn fab_member_estvar(
    theta_hat: &DVector<f64>,
    sigma_hat: &DMatrix<f64>,
    nu: u32,
    y: &DVector<f64>,
    tilde_sigma: &DMatrix<f64>,
    params: &EstVarParams,
    reps: usize,
    seed: u64,
) -> Result<bool> {
    EstVarFab::new(params.clone(), tilde_sigma, nu, reps, seed)?.member(theta_hat, sigma_hat, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::phi_inv;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn cfg1(lambda: PriorScale) -> NormalFabConfig {
        NormalFabConfig::scalar(1.0, 1.0, 0.0, lambda, 0.1).unwrap()
    }

    #[test]
    fn delta_examples() {
        let c = cfg1(PriorScale::Finite(1.0));
        assert!(c.delta_z(&v1(0.0)).unwrap()[0].abs() < 1e-15);
        let d = c.delta_z(&v1(1.0)).unwrap()[0];
        assert!((d - (-(0.5f64).sqrt() / 1.5)).abs() < 1e-12);
        assert!((d + 0.4714).abs() < 1e-4);
        let inf = cfg1(PriorScale::Infinite);
        assert_eq!(inf.delta_z(&v1(3.0)).unwrap()[0], 0.0);
    }

    #[test]
    fn v_lambda_factors_are_distinct() {
        let c = NormalFabConfig::scalar(2.0, 1.0, 0.0, PriorScale::Finite(3.0), 0.1).unwrap();
        assert_eq!(c.v_lambda_x(), 5.0);
        assert!((c.v_lambda_y() - (3.0 * 3.0 + 2.0) / 5.0).abs() < 1e-15);
        assert!(c.v_lambda_x() - c.v() > 0.0);
    }

    #[test]
    fn pivotal_membership_threshold() {
        let c = cfg1(PriorScale::Infinite);
        assert!(fab_member(&v1(0.0), &v1(2.0), &c).unwrap());
        assert!(!fab_member(&v1(0.0), &v1(2.4), &c).unwrap());
    }

    #[test]
    fn centre_points_accepted() {
        let c = cfg1(PriorScale::Finite(1.0));
        assert!(fab_member(&v1(0.0), &v1(0.0), &c).unwrap());
        for lambda in [0.1, 1.0, 10.0] {
            for mu in [-2.0, 0.5, 3.0] {
                let c = NormalFabConfig::scalar(1.0, 1.0, mu, PriorScale::Finite(lambda), 0.1).unwrap();
                assert!(fab_member(&v1(mu), &v1(mu), &c).unwrap());
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = cfg1(PriorScale::Infinite);
        let two = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(fab_member(&two, &v1(0.0), &c), Err(FabError::DimensionMismatch { .. })));
    }

    #[test]
    fn non_spd_sigma_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = NormalFabConfig::new(1.0, bad, DVector::zeros(2), PriorScale::Infinite, 0.1).unwrap_err();
        assert!(matches!(err, FabError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn pivotal_interval_matches_closed_form() {
        let r = fab_interval_1d(0.0, &cfg1(PriorScale::Infinite)).unwrap();
        let half = 2f64.sqrt() * phi_inv(0.95);
        assert!(r.contiguous);
        assert!((r.intervals[0].0 + half).abs() < 1e-4);
        assert!((r.intervals[0].1 - half).abs() < 1e-4);
        assert!((r.total_measure - 4.65235).abs() < 1e-4);
        let (lo, hi) = pivotal_interval_1d(0.0, 1.0, 1.0, 0.1).unwrap();
        assert!((hi - lo - r.total_measure).abs() < 1e-7);
    }

    #[test]
    fn informative_prior_narrower_at_prior_mean_and_symmetric() {
        let c = cfg1(PriorScale::Finite(1.0));
        let r = fab_interval_1d(0.0, &c).unwrap();
        assert!(r.total_measure < 4.6524);
        for x in [0.7, 2.0, 4.5] {
            let a = fab_interval_1d(x, &c).unwrap();
            let b = fab_interval_1d(-x, &c).unwrap();
            let (alo, ahi) = a.hull().unwrap();
            let (blo, bhi) = b.hull().unwrap();
            assert!((alo + bhi).abs() < 1e-7 && (ahi + blo).abs() < 1e-7);
        }
    }

    #[test]
    fn quantile_and_cdf_forms_agree() {
        let c = NormalFabConfig::scalar(1.5, 2.0, 0.3, PriorScale::Finite(0.7), 0.1).unwrap();
        for i in -40..40 {
            let y = i as f64 * 0.2;
            let a = fab_member(&v1(1.0), &v1(y), &c).unwrap();
            let b = c.member_via_quantile(&v1(1.0), &v1(y)).unwrap();
            assert_eq!(a, b, "y={y}");
        }
    }

    #[test]
    fn equivariant_disc_area() {
        let c = NormalFabConfig::isotropic(2, 1.0, 1.0, DVector::zeros(2), PriorScale::Infinite, 0.1).unwrap();
        let r = fab_region_2d(&DVector::zeros(2), &c, 256).unwrap();
        let want = std::f64::consts::PI * 2.0 * 4.605_170_185_988_092;
        assert!((r.area - want).abs() <= r.err_bound, "{} vs {want} ± {}", r.area, r.err_bound);
        assert!((r.area / want - 1.0).abs() < 0.005);
    }

    #[test]
    fn area_invariant_to_sigma_factor() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let mu = DVector::from_vec(vec![0.5, -0.5]);
        let c = NormalFabConfig::new(1.0, sigma.clone(), mu, PriorScale::Finite(1.0), 0.1).unwrap();
        // symmetric square root via eigen-decomposition
        let eig = sigma.symmetric_eigen();
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
        let c2 = c.clone().with_sigma_factor(root).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.3]);
        let a = fab_region_2d(&x, &c, 128).unwrap();
        let b = fab_region_2d(&x, &c2, 128).unwrap();
        assert_eq!(a.n_cells, b.n_cells);
        for i in 0..50 {
            let y = DVector::from_vec(vec![(i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.71).cos() * 3.0]);
            let s1 = c.statistic(&x, &y).unwrap();
            let s2 = c2.statistic(&x, &y).unwrap();
            assert!((s1 - s2).abs() < 1e-10 * s1.max(1.0));
        }
    }

    #[test]
    fn estvar_zero_shift_is_two_sided_t() {
        let params = EstVarParams {
            k: 1.0,
            mu: v1(0.0),
            lambda: PriorScale::Infinite,
            alpha: 0.1,
        };
        let fab = EstVarFab::new(params.clone(), &DMatrix::identity(1, 1), 5, 10_000, 1).unwrap();
        let s2 = 1.7f64;
        let scale = s2.sqrt() * 2f64.sqrt();
        for i in -50..50 {
            let y = i as f64 * 0.1;
            let want = (0.3 - y).abs() / scale < 2.015_048_373_333_023;
            let got = fab.member(&v1(0.3), &DMatrix::from_element(1, 1, s2), &v1(y)).unwrap();
            if ((0.3 - y).abs() / scale - 2.015048).abs() > 1e-5 {
                assert_eq!(got, want, "y={y}");
            }
        }
        let once = fab_member_estvar(&v1(0.3), &DMatrix::from_element(1, 1, s2), 5, &v1(1.0), &DMatrix::identity(1, 1), &params, 10_000, 9).unwrap();
        assert!(once);
    }

    #[test]
    fn estvar_large_nu_matches_known_variance() {
        let params = EstVarParams {
            k: 1.0,
            mu: v1(0.0),
            lambda: PriorScale::Finite(1.0),
            alpha: 0.1,
        };
        let est = EstVarFab::new(params, &DMatrix::identity(1, 1), 1_000_000, 10_000, 1).unwrap();
        let known = cfg1(PriorScale::Finite(1.0));
        let a = est.interval_1d(0.8, 1.0, &InversionOptions::default()).unwrap();
        let b = fab_interval_1d(0.8, &known).unwrap();
        assert!((a.total_measure - b.total_measure).abs() < 1e-3);
    }

    #[test]
    fn estvar_multivariate_is_deterministic() {
        let params = EstVarParams {
            k: 1.0,
            mu: DVector::zeros(2),
            lambda: PriorScale::Finite(1.0),
            alpha: 0.1,
        };
        let th = DVector::from_vec(vec![0.2, -0.1]);
        let sh = DMatrix::from_row_slice(2, 2, &[1.2, 0.1, 0.1, 0.9]);
        let y = DVector::from_vec(vec![1.5, 1.0]);
        let a = fab_member_estvar(&th, &sh, 10, &y, &DMatrix::identity(2, 2), &params, 10_000, 5).unwrap();
        let b = fab_member_estvar(&th, &sh, 10, &y, &DMatrix::identity(2, 2), &params, 10_000, 5).unwrap();
        assert_eq!(a, b);
        assert!(fab_member_estvar(&th, &sh, 10, &th, &DMatrix::identity(2, 2), &params, 10_000, 5).unwrap());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(fab_member_estvar(&th, &bad, 10, &y, &DMatrix::identity(2, 2), &params, 10_000, 5).is_err());
    }
}
