//! FAB prediction intervals for the normal linear model.
//!
//! Predict `Y ~ N(vᵀβ, σ²)` from `X ~ N_n(Uβ, σ²I)` under the prior
//! `β ~ N_p(0, σ²Ψ^{-1})`. With `S_ψ = (UᵀU + Ψ)^{-1}`, `w_ψ = 1 + vᵀS_ψv` and
//! `Z = UᵀX + vY`, the FAB interval is
//!
//! ```text
//! { y : |(y - β̂ᵀv)/(σ√w₀) + δ_z| <= q_z },   δ_z = vᵀ(S₀/w₀ - S_ψ/w_ψ) z √w₀ / σ
//! ```
//!
//! where `q_z` solves `Φ(q - δ_z) - Φ(-q - δ_z) = 1 - α`. The t-version swaps
//! σ for two independent estimates (`σ̂` in the pivot, `σ̃` in the shift) and
//! Φ for the `t_ν` CDF.

use nalgebra::{DMatrix, DVector};

use crate::error::{FabError, Result};
use crate::normal::{check_alpha, spd_cholesky};
use crate::region::{invert_membership_with, CriticalCdf, InversionOptions, RegionResult};
use crate::specfun::{phi_inv, t_quantile};

/// `Ψ = I/τ²`, i.e. `β ~ N(0, σ²τ² I)`.
pub fn ridge_prior(p: usize, tau2: f64) -> DMatrix<f64> {
    DMatrix::identity(p, p) / tau2
}

/// `Z = Uᵀx + v y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegSufficient {
    pub z: DVector<f64>,
}

/// Design, target covariates, prior precision and level, with cached
/// `S₀`, `S_ψ`, `w₀`, `w_ψ`.
#[derive(Debug, Clone)]
pub struct RegressionFabConfig {
    u: DMatrix<f64>,
    v: DVector<f64>,
    sigma2: Option<f64>,
    psi: DMatrix<f64>,
    alpha: f64,
    s0: DMatrix<f64>,
    s_psi: DMatrix<f64>,
    w0: f64,
    w_psi: f64,
    /// `vᵀβ̂ = ols_row · x`
    ols_row: DVector<f64>,
    /// `vᵀβ̂_ψ = ridge_row · x`
    ridge_row: DVector<f64>,
    /// `g = (S₀/w₀ - S_ψ/w_ψ) v`
    g: DVector<f64>,
    /// `√w₀ gᵀUᵀ`, the x-part of `σ δ_z`
    shift_row: DVector<f64>,
    /// `√w₀ gᵀv`, the y-coefficient of `σ δ_z`
    shift_y: f64,
}

impl RegressionFabConfig {
    /// `sigma2 = None` means σ² is estimated from the residuals.
    pub fn new(u: DMatrix<f64>, v: DVector<f64>, sigma2: Option<f64>, psi: DMatrix<f64>, alpha: f64) -> Result<Self> {
        let (n, p) = u.shape();
        if p == 0 || n < p {
            return Err(FabError::InvalidConfig(format!("design must be n x p with n >= p >= 1, got {n} x {p}")));
        }
        if v.len() != p {
            return Err(FabError::DimensionMismatch { expected: p, got: v.len() });
        }
        if psi.shape() != (p, p) {
            return Err(FabError::DimensionMismatch {
                expected: p,
                got: psi.nrows(),
            });
        }
        if let Some(s2) = sigma2 {
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(FabError::InvalidConfig(format!("sigma2 = {s2} must be positive")));
            }
        }
        check_alpha(alpha)?;
        if (&psi - psi.transpose()).amax() > 1e-10 * psi.amax().max(1.0) {
            return Err(FabError::NotPositiveDefinite { what: "Psi" });
        }
        if p > 0 && psi.clone().symmetric_eigenvalues().min() < -1e-12 * psi.amax().max(1.0) {
            return Err(FabError::NotPositiveDefinite { what: "Psi" });
        }
        let utu = u.transpose() * &u;
        let s0 = spd_inverse(&utu, "UtU")?;
        let s_psi = spd_inverse(&(&utu + &psi), "UtU + Psi")?;
        let w0 = 1.0 + v.dot(&(&s0 * &v));
        let w_psi = 1.0 + v.dot(&(&s_psi * &v));
        let ols_row = &u * (&s0 * &v);
        let ridge_row = &u * (&s_psi * &v);
        let g = &s0 * &v / w0 - &s_psi * &v / w_psi;
        let shift_row = &u * &g * w0.sqrt();
        let shift_y = g.dot(&v) * w0.sqrt();
        Ok(Self {
            u,
            v,
            sigma2,
            psi,
            alpha,
            s0,
            s_psi,
            w0,
            w_psi,
            ols_row,
            ridge_row,
            g,
            shift_row,
            shift_y,
        })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn s0(&self) -> &DMatrix<f64> {
        &self.s0
    }

    pub fn s_psi(&self) -> &DMatrix<f64> {
        &self.s_psi
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn w_psi(&self) -> f64 {
        self.w_psi
    }

    fn known_sigma(&self, op: &'static str) -> Result<f64> {
        self.sigma2
            .map(f64::sqrt)
            .ok_or_else(|| FabError::domain(op, "sigma2 is marked as estimated; use the t-version"))
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.n() {
            Ok(())
        } else {
            Err(FabError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            })
        }
    }

    pub fn sufficient(&self, x: &DVector<f64>, y: f64) -> RegSufficient {
        RegSufficient {
            z: self.u.transpose() * x + &self.v * y,
        }
    }

    /// Ordinary least squares `β̂ = S₀Uᵀx`.
    pub fn beta_ols(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.s0 * (self.u.transpose() * x)
    }

    /// Posterior mean `β̂_ψ = S_ψUᵀx`.
    pub fn beta_ridge(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.s_psi * (self.u.transpose() * x)
    }

    /// `δ_z` with the known σ.
    pub fn delta_reg(&self, z: &DVector<f64>) -> Result<f64> {
        let sigma = self.known_sigma("delta_reg")?;
        Ok(self.delta_with_scale(z, sigma))
    }

    /// `vᵀ(S₀/w₀ - S_ψ/w_ψ) z √w₀ / scale`.
    pub fn delta_with_scale(&self, z: &DVector<f64>, scale: f64) -> f64 {
        self.g.dot(z) * self.w0.sqrt() / scale
    }

    /// Per-`x` quantities that make membership O(1) in `y`.
    fn prepare(&self, x: &DVector<f64>) -> Prepared {
        Prepared {
            ols_pred: self.ols_row.dot(x),
            shift_x: self.shift_row.dot(x),
        }
    }

    fn member_prepared(&self, pre: &Prepared, y: f64, scale: f64, shift_scale: f64, cdf: CriticalCdf) -> bool {
        let delta = (pre.shift_x + self.shift_y * y) / shift_scale;
        let stat = ((y - pre.ols_pred) / (scale * self.w0.sqrt()) + delta).abs();
        cdf.abs_shift_cdf(stat, delta) <= 1.0 - self.alpha
    }

    /// Statistic written through `z`: `√w₀/σ (y - vᵀ[S₀/w₀]z) + δ_z` (signed).
    pub fn statistic_via_z(&self, x: &DVector<f64>, y: f64) -> Result<f64> {
        let sigma = self.known_sigma("statistic_via_z")?;
        let z = self.sufficient(x, y).z;
        let centred = y - self.v.dot(&(&self.s0 * &z)) / self.w0;
        Ok(self.w0.sqrt() / sigma * centred + self.delta_with_scale(&z, sigma))
    }

    /// Statistic through OLS: `(y - β̂ᵀv)/(σ√w₀) + δ_z` (signed).
    pub fn statistic_via_ols(&self, x: &DVector<f64>, y: f64) -> Result<f64> {
        let sigma = self.known_sigma("statistic_via_ols")?;
        let z = self.sufficient(x, y).z;
        Ok((y - self.beta_ols(x).dot(&self.v)) / (sigma * self.w0.sqrt()) + self.delta_with_scale(&z, sigma))
    }

    /// Statistic through the posterior mean: `|y - β̂_ψᵀv| √w₀/(σ w_ψ)`.
    pub fn statistic_via_ridge(&self, x: &DVector<f64>, y: f64) -> Result<f64> {
        let sigma = self.known_sigma("statistic_via_ridge")?;
        Ok((y - self.beta_ridge(x).dot(&self.v)).abs() * self.w0.sqrt() / (sigma * self.w_psi))
    }

    /// Statistic in its completed-square form: `√w₀/σ |y - vᵀ[S_ψ/w_ψ]z|`.
    pub fn statistic_completed_square(&self, x: &DVector<f64>, y: f64) -> Result<f64> {
        let sigma = self.known_sigma("statistic_completed_square")?;
        let z = self.sufficient(x, y).z;
        Ok(self.w0.sqrt() / sigma * (y - self.v.dot(&(&self.s_psi * &z)) / self.w_psi).abs())
    }

    /// Known-σ membership.
    pub fn member(&self, x: &DVector<f64>, y: f64) -> Result<bool> {
        let sigma = self.known_sigma("fab_member_reg")?;
        self.check_x(x)?;
        Ok(self.member_prepared(&self.prepare(x), y, sigma, sigma, CriticalCdf::Normal))
    }

    /// Known-σ membership through the explicit ridge-form interval with the
    /// critical value solved at `z = Z(x, y)`.
    pub fn member_ridge_form(&self, x: &DVector<f64>, y: f64) -> Result<bool> {
        let sigma = self.known_sigma("fab_member_reg")?;
        self.check_x(x)?;
        let z = self.sufficient(x, y).z;
        let q = crate::region::solve_critical_q(self.delta_with_scale(&z, sigma), self.alpha, CriticalCdf::Normal)?;
        let centre = self.beta_ridge(x).dot(&self.v);
        let half = q * sigma * self.w_psi / self.w0.sqrt();
        Ok(centre - half <= y && y <= centre + half)
    }

    /// Known-σ FAB interval.
    pub fn interval(&self, x: &DVector<f64>, opts: &InversionOptions) -> Result<RegionResult> {
        let sigma = self.known_sigma("fab_interval_reg")?;
        self.check_x(x)?;
        let pre = self.prepare(x);
        invert_membership_with(
            |y| self.member_prepared(&pre, y, sigma, sigma, CriticalCdf::Normal),
            pre.ols_pred,
            sigma * self.w0.sqrt(),
            opts,
        )
    }

    /// t-version membership with independent `σ̂²` (ν df) and `σ̃²`.
    pub fn member_t(&self, x: &DVector<f64>, y: f64, est: &VarianceEstimates) -> Result<bool> {
        self.check_x(x)?;
        est.validate()?;
        Ok(self.member_prepared(
            &self.prepare(x),
            y,
            est.sigma_hat2.sqrt(),
            est.sigma_tilde2.sqrt(),
            CriticalCdf::StudentT(est.nu),
        ))
    }

    /// t-version FAB interval.
    pub fn interval_t(&self, x: &DVector<f64>, est: &VarianceEstimates, opts: &InversionOptions) -> Result<RegionResult> {
        self.check_x(x)?;
        est.validate()?;
        let pre = self.prepare(x);
        let scale = est.sigma_hat2.sqrt();
        let shift_scale = est.sigma_tilde2.sqrt();
        invert_membership_with(
            |y| self.member_prepared(&pre, y, scale, shift_scale, CriticalCdf::StudentT(est.nu)),
            pre.ols_pred,
            scale * self.w0.sqrt(),
            opts,
        )
    }

    /// Posterior predictive (highest density) interval.
    pub fn bayes_interval(&self, x: &DVector<f64>) -> Result<(f64, f64)> {
        let sigma = self.known_sigma("bayes_interval_reg")?;
        self.check_x(x)?;
        let centre = self.ridge_row.dot(x);
        let half = phi_inv(1.0 - self.alpha / 2.0) * sigma * self.w_psi.sqrt();
        Ok((centre - half, centre + half))
    }

    /// Equivariant interval `β̂ᵀv ± Φ^{-1}(1 - α/2) σ√w₀`.
    pub fn equivariant_interval(&self, x: &DVector<f64>) -> Result<(f64, f64)> {
        let sigma = self.known_sigma("equivariant_interval_reg")?;
        self.check_x(x)?;
        let centre = self.ols_row.dot(x);
        let half = phi_inv(1.0 - self.alpha / 2.0) * sigma * self.w0.sqrt();
        Ok((centre - half, centre + half))
    }

    /// Equivariant t interval `β̂ᵀv ± t_{ν,1-α/2} σ̂√w₀`.
    pub fn equivariant_t_interval(&self, x: &DVector<f64>, sigma_hat2: f64, nu: u32) -> Result<(f64, f64)> {
        self.check_x(x)?;
        let centre = self.ols_row.dot(x);
        let half = t_quantile(1.0 - self.alpha / 2.0, nu)? * sigma_hat2.sqrt() * self.w0.sqrt();
        Ok((centre - half, centre + half))
    }
}

#[derive(Debug, Clone, Copy)]
struct Prepared {
    ols_pred: f64,
    shift_x: f64,
}

fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    spd_cholesky(m, what)?;
    Ok(m.clone().cholesky().ok_or(FabError::NotPositiveDefinite { what })?.inverse())
}

pub fn delta_reg(z: &DVector<f64>, cfg: &RegressionFabConfig) -> Result<f64> {
    cfg.delta_reg(z)
}

pub fn fab_member_reg(x: &DVector<f64>, y: f64, cfg: &RegressionFabConfig) -> Result<bool> {
    cfg.member(x, y)
}

pub fn fab_interval_reg(x: &DVector<f64>, cfg: &RegressionFabConfig) -> Result<RegionResult> {
    cfg.interval(x, &InversionOptions::default())
}

pub fn bayes_interval_reg(x: &DVector<f64>, cfg: &RegressionFabConfig) -> Result<(f64, f64)> {
    cfg.bayes_interval(x)
}

pub fn fab_member_reg_t(
    x: &DVector<f64>,
    y: f64,
    cfg: &RegressionFabConfig,
    sigma_hat2: f64,
    nu: u32,
    sigma_tilde2: f64,
) -> Result<bool> {
    cfg.member_t(
        x,
        y,
        &VarianceEstimates {
            sigma_hat2,
            nu,
            sigma_tilde2,
            nu_tilde: 0,
        },
    )
}

// ---------------------------------------------------------------------------
// Residual variance split
// ---------------------------------------------------------------------------

/// Two independent variance estimates from one residual vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimates {
    /// Scale for the pivot; `ν σ̂²/σ² ~ χ²_ν`.
    pub sigma_hat2: f64,
    pub nu: u32,
    /// Scale for the shift; independent of `σ̂²` and of `UᵀX`.
    pub sigma_tilde2: f64,
    /// Degrees of freedom behind `σ̃²` (0 when supplied externally).
    pub nu_tilde: u32,
}

impl VarianceEstimates {
    fn validate(&self) -> Result<()> {
        if !(self.sigma_hat2 > 0.0) || !(self.sigma_tilde2 > 0.0) {
            return Err(FabError::domain("fab_member_reg_t", "variance estimates must be positive"));
        }
        if self.nu < 1 {
            return Err(FabError::InsufficientDf("nu must be >= 1".into()));
        }
        Ok(())
    }
}

/// Default df for `σ̃²`: `min(4, ⌊(n-p)/2⌋)`.
pub fn default_split_df(n: usize, p: usize) -> usize {
    4.min((n - p) / 2)
}

/// Orthonormal basis of the orthogonal complement of `col(U)`.
#[derive(Debug, Clone)]
pub struct ResidualBasis {
    /// `(n - p) × n`, orthonormal rows, each orthogonal to every column of U.
    basis: DMatrix<f64>,
}

impl ResidualBasis {
    pub fn new(u: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = u.shape();
        if n < p + 2 {
            return Err(FabError::InsufficientDf(format!("n - p = {} < 2", n as i64 - p as i64)));
        }
        let qr = u.clone().qr();
        let mut qt = DMatrix::<f64>::identity(n, n);
        qr.q_tr_mul(&mut qt);
        let basis = qt.rows(p, n - p).into_owned();
        Ok(Self { basis })
    }

    pub fn df(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Residual coordinates `e = N x`; `||e||²` is the residual sum of squares.
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * x
    }

    /// First `split_df` coordinates give `σ̃²`, the remaining ones `σ̂²`.
    pub fn split(&self, x: &DVector<f64>, split_df: usize) -> Result<VarianceEstimates> {
        let df = self.df();
        if split_df < 1 || split_df + 1 > df {
            return Err(FabError::InsufficientDf(format!(
                "split_df = {split_df} must lie in [1, {}]",
                df - 1
            )));
        }
        if x.len() != self.basis.ncols() {
            return Err(FabError::DimensionMismatch {
                expected: self.basis.ncols(),
                got: x.len(),
            });
        }
        let e = self.coordinates(x);
        let tilde: f64 = e.iter().take(split_df).map(|c| c * c).sum();
        let hat: f64 = e.iter().skip(split_df).map(|c| c * c).sum();
        let nu = df - split_df;
        Ok(VarianceEstimates {
            sigma_hat2: hat / nu as f64,
            nu: nu as u32,
            sigma_tilde2: tilde / split_df as f64,
            nu_tilde: split_df as u32,
        })
    }
}

/// `(σ̂², σ̃²)` from the residuals of regressing `x` on `U`.
pub fn split_variance_estimates(x: &DVector<f64>, u: &DMatrix<f64>, split_df: usize) -> Result<VarianceEstimates> {
    ResidualBasis::new(u)?.split(x, split_df)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_cfg(psi: f64) -> RegressionFabConfig {
        RegressionFabConfig::new(
            DMatrix::from_element(4, 1, 1.0),
            DVector::from_element(1, 1.0),
            Some(1.0),
            DMatrix::from_element(1, 1, psi),
            0.1,
        )
        .unwrap()
    }

    fn small_design() -> DMatrix<f64> {
        DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.61).sin() + if j == 0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn cached_values_for_intercept_model() {
        let c = ones_cfg(1.0);
        assert!((c.s0()[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((c.w0() - 1.25).abs() < 1e-15);
        assert!((c.s_psi()[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((c.w_psi() - 1.2).abs() < 1e-15);
        let z = DVector::from_element(1, 2.0);
        let want = (0.2 - 1.0 / 6.0) * 2.0 * 1.25f64.sqrt();
        assert!((c.delta_reg(&z).unwrap() - want).abs() < 1e-14);
        assert!((c.delta_reg(&z).unwrap() / 2.0 - 0.0373).abs() < 1e-4);
    }

    #[test]
    fn flat_prior_has_zero_shift() {
        let c = ones_cfg(0.0);
        let z = DVector::from_element(1, 3.7);
        assert_eq!(c.delta_reg(&z).unwrap(), 0.0);
        assert_eq!(ones_cfg(1.0).delta_reg(&DVector::zeros(1)).unwrap(), 0.0);
    }

    #[test]
    fn flat_prior_membership_is_equivariant() {
        let u = small_design();
        let v = DVector::from_vec(vec![1.0, 0.3, -0.2]);
        let c = RegressionFabConfig::new(u, v, Some(1.0), DMatrix::zeros(3, 3), 0.1).unwrap();
        let x = DVector::from_fn(12, |i, _| (i as f64).cos());
        let (lo, hi) = c.equivariant_interval(&x).unwrap();
        let r = c.interval(&x, &InversionOptions::default()).unwrap();
        assert!((r.intervals[0].0 - lo).abs() < 1e-7);
        assert!((r.intervals[0].1 - hi).abs() < 1e-7);
        let b = c.bayes_interval(&x).unwrap();
        assert!((b.0 - lo).abs() < 1e-12 && (b.1 - hi).abs() < 1e-12);
    }

    #[test]
    fn ols_point_is_always_accepted() {
        let u = small_design();
        for s in 0..20 {
            let v = DVector::from_fn(3, |i, _| ((s * 3 + i) as f64).sin() * 2.0);
            let psi = DMatrix::identity(3, 3) * (0.1 + s as f64);
            let c = RegressionFabConfig::new(u.clone(), v, Some(1.0), psi, 0.1).unwrap();
            let x = DVector::from_fn(12, |i, _| ((i + s) as f64 * 1.3).sin() * 4.0);
            let y = c.beta_ols(&x).dot(c.v());
            let z = c.sufficient(&x, y).z;
            let d = c.delta_reg(&z).unwrap();
            let q = crate::region::solve_critical_q(d, 0.1, CriticalCdf::Normal).unwrap();
            assert!(q > d.abs());
            assert!(c.member(&x, y).unwrap());
        }
    }

    #[test]
    fn estimated_sigma_rejects_known_sigma_ops() {
        let c = RegressionFabConfig::new(small_design(), DVector::from_element(3, 1.0), None, DMatrix::zeros(3, 3), 0.1).unwrap();
        assert!(c.member(&DVector::zeros(12), 0.0).is_err());
        let est = VarianceEstimates {
            sigma_hat2: 1.0,
            nu: 5,
            sigma_tilde2: 1.0,
            nu_tilde: 4,
        };
        assert!(c.member_t(&DVector::zeros(12), 0.0, &est).is_ok());
    }

    #[test]
    fn t_version_flat_prior_is_two_sided_t() {
        let u = small_design();
        let v = DVector::from_vec(vec![1.0, 0.5, 0.5]);
        let c = RegressionFabConfig::new(u, v, None, DMatrix::zeros(3, 3), 0.1).unwrap();
        let x = DVector::from_fn(12, |i, _| (i as f64 * 0.3).sin());
        let est = VarianceEstimates {
            sigma_hat2: 1.3,
            nu: 5,
            sigma_tilde2: 0.7,
            nu_tilde: 4,
        };
        let r = c.interval_t(&x, &est, &InversionOptions::default()).unwrap();
        let (lo, hi) = c.equivariant_t_interval(&x, 1.3, 5).unwrap();
        assert!((r.intervals[0].0 - lo).abs() < 1e-7 && (r.intervals[0].1 - hi).abs() < 1e-7);
    }

    #[test]
    fn residual_basis_is_orthonormal_complement() {
        let u = small_design();
        let rb = ResidualBasis::new(&u).unwrap();
        assert_eq!(rb.df(), 9);
        let b = rb.basis();
        assert!((b * b.transpose() - DMatrix::identity(9, 9)).amax() < 1e-12);
        assert!((b * &u).amax() < 1e-12);
    }

    #[test]
    fn split_sums_to_rss() {
        let u = small_design();
        let x = DVector::from_fn(12, |i, _| (i as f64 * 2.1).cos() * 3.0 + i as f64);
        let est = split_variance_estimates(&x, &u, 3).unwrap();
        let c = RegressionFabConfig::new(u.clone(), DVector::from_element(3, 1.0), None, DMatrix::zeros(3, 3), 0.1).unwrap();
        let resid = &x - &u * c.beta_ols(&x);
        let rss = resid.norm_squared();
        let total = 3.0 * est.sigma_tilde2 + est.nu as f64 * est.sigma_hat2;
        assert!((total - rss).abs() < 1e-10 * rss);
        assert_eq!(est.nu, 6);
        assert!(split_variance_estimates(&x, &u, 0).is_err());
        assert!(split_variance_estimates(&x, &u, 9).is_err());
        assert!(ResidualBasis::new(&DMatrix::from_element(4, 3, 1.0)).is_err());
        assert_eq!(default_split_df(30, 5), 4);
        assert_eq!(default_split_df(8, 5), 1);
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let u = DMatrix::from_element(6, 2, 1.0);
        let err = RegressionFabConfig::new(u, DVector::from_element(2, 1.0), Some(1.0), DMatrix::zeros(2, 2), 0.1).unwrap_err();
        assert!(matches!(err, FabError::NotPositiveDefinite { .. }));
    }
}
