//! Special functions used by the region constructions.
//!
//! Normal, Student-t and noncentral chi-square CDFs and quantiles, plus the
//! distribution of `||T + b||²` for a multivariate-t-like pivot `T`. Everything
//! is implemented here directly; all quantiles are found by bracketed bisection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{FabError, Result};
use crate::rng::replicate_rng;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TINY: f64 = 1e-300;
const EPS: f64 = 1e-16;

/// Beyond this |x| the normal tail comes from the Mills-ratio continued fraction.
const NORM_TAIL_SWITCH: f64 = 3.0;

/// Minimum replicate count accepted by [`shifted_t_sq_quantile`].
pub const MIN_SHIFTED_T_REPS: usize = 10_000;

// ---------------------------------------------------------------------------
// Root bracketing
// ---------------------------------------------------------------------------

/// Bisection for a nondecreasing `f` with `f(lo) <= target <= f(hi)`.
///
/// Stops once `|f(mid) - target| < ftol` or the bracket is narrower than `xtol`.
pub(crate) fn bisect_increasing<F>(f: F, mut lo: f64, mut hi: f64, target: f64, ftol: f64, xtol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm - target).abs() < ftol || hi - lo < xtol {
            break;
        }
        if fm < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

fn check_unit(op: &'static str, u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(FabError::domain(op, format!("probability {u} not in (0,1)")))
    }
}

// ---------------------------------------------------------------------------
// Normal
// ---------------------------------------------------------------------------

pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail `1 - Φ(x)` for `x > 0` via the Mills-ratio continued fraction
/// `x + 1/(x + 2/(x + 3/(x + ...)))`, evaluated with modified Lentz.
fn mills_upper_tail(x: f64) -> f64 {
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..2000 {
        let a = n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    norm_pdf(x) / f
}

/// Standard normal CDF without argument checks. NaN propagates.
pub(crate) fn phi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < -NORM_TAIL_SWITCH {
        return mills_upper_tail(-x);
    }
    if x > NORM_TAIL_SWITCH {
        return 1.0 - mills_upper_tail(x);
    }
    // Φ(x) = 1/2 + φ(x) (x + x³/3 + x⁵/(3·5) + ...), all terms of one sign.
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 1.0;
    while term.abs() > EPS * sum.abs() {
        n += 2.0;
        term *= x2 / n;
        sum += term;
    }
    (0.5 + norm_pdf(x) * sum).clamp(0.0, 1.0)
}

/// Standard normal CDF, accurate to well below 1e-12 absolute and relative
/// accuracy in the far tails.
pub fn norm_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(FabError::domain("norm_cdf", format!("non-finite argument {x}")));
    }
    Ok(phi(x))
}

pub(crate) fn phi_inv(u: f64) -> f64 {
    bisect_increasing(phi, -40.0, 40.0, u, 0.0, 1e-15)
}

/// Standard normal quantile.
pub fn norm_quantile(u: f64) -> Result<f64> {
    check_unit("norm_quantile", u)?;
    Ok(phi_inv(u))
}

// ---------------------------------------------------------------------------
// Gamma family
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..100_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum * gamma_prefactor(a, x)).min(1.0)
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (gamma_prefactor(a, x) * h).min(1.0)
}

// ---------------------------------------------------------------------------
// Noncentral chi-square
// ---------------------------------------------------------------------------

/// Noncentral chi-square law with `df` degrees of freedom and noncentrality `nc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralChiSq {
    df: u32,
    nc: f64,
}

impl NoncentralChiSq {
    pub fn new(df: u32, nc: f64) -> Result<Self> {
        if df < 1 {
            return Err(FabError::domain("NoncentralChiSq", "df must be >= 1"));
        }
        if !(nc >= 0.0) || !nc.is_finite() {
            return Err(FabError::domain("NoncentralChiSq", format!("noncentrality {nc} must be finite and >= 0")));
        }
        Ok(Self { df, nc })
    }

    pub fn central(df: u32) -> Result<Self> {
        Self::new(df, 0.0)
    }

    pub fn df(&self) -> u32 {
        self.df
    }

    pub fn nc(&self) -> f64 {
        self.nc
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        ncchisq_cdf(x, *self)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        ncchisq_quantile(u, *self)
    }

    /// Upper end of the default quantile bracket.
    fn bracket_hi(&self) -> f64 {
        let m = self.nc + self.df as f64;
        m + 40.0 * m.sqrt()
    }
}

/// Remaining Poisson mass below which the mixture series is truncated.
const POISSON_TAIL: f64 = 1e-15;

/// Poisson-mixture CDF without argument checks; `x <= 0` gives 0.
///
/// Summation starts at the modal Poisson index and walks outwards in both
/// directions. Neighbouring central terms are linked by
/// `P(a+1, h) = P(a, h) - h^a e^{-h} / Γ(a+1)`, so only one incomplete gamma
/// evaluation is needed.
pub(crate) fn ncchisq_cdf_raw(x: f64, df: f64, nc: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    let h = 0.5 * x;
    let a0 = 0.5 * df;
    let lam = 0.5 * nc;
    if lam == 0.0 {
        return gamma_p(a0, h);
    }
    let ln_h = h.ln();
    let ln_lam = lam.ln();
    let j0 = lam.floor();
    let w0 = (-lam + j0 * ln_lam - ln_gamma(j0 + 1.0)).exp();
    let a_mode = a0 + j0;
    let p0 = gamma_p(a_mode, h);
    // ln of h^a e^{-h} / Γ(a+1) at a = a_mode
    let ln_t0 = a_mode * ln_h - h - ln_gamma(a_mode + 1.0);

    let mut total = w0 * p0;

    // downward: P(a-1) = P(a) + h^{a-1} e^{-h}/Γ(a)
    let mut j = j0;
    let mut w = w0;
    let mut p = p0;
    let mut ln_t = ln_t0; // term for index a = a0 + j
    while j > 0.0 {
        let a = a0 + j;
        // term at a-1: ln t(a-1) = ln t(a) + ln a - ln h
        ln_t += a.ln() - ln_h;
        p = (p + ln_t.exp()).min(1.0);
        w *= j / lam;
        j -= 1.0;
        total += w * p;
        let r = j / lam;
        if j == 0.0 || w * r / (1.0 - r) < POISSON_TAIL {
            break;
        }
    }

    // upward: P(a+1) = P(a) - h^a e^{-h}/Γ(a+1)
    let mut j = j0;
    let mut w = w0;
    let mut p = p0;
    let mut ln_t = ln_t0;
    for _ in 0..1_000_000 {
        let a = a0 + j;
        p = (p - ln_t.exp()).max(0.0);
        ln_t += ln_h - (a + 1.0).ln();
        j += 1.0;
        w *= lam / j;
        total += w * p;
        let r = lam / (j + 1.0);
        if r < 1.0 && w * r / (1.0 - r) < POISSON_TAIL {
            break;
        }
        if p == 0.0 && j > lam {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

/// CDF of the noncentral chi-square distribution.
pub fn ncchisq_cdf(x: f64, dist: NoncentralChiSq) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(FabError::domain("ncchisq_cdf", format!("x = {x} must be >= 0")));
    }
    Ok(ncchisq_cdf_raw(x, dist.df as f64, dist.nc))
}

/// Quantile of the noncentral chi-square distribution, by bisection on the CDF.
pub fn ncchisq_quantile(u: f64, dist: NoncentralChiSq) -> Result<f64> {
    check_unit("ncchisq_quantile", u)?;
    let df = dist.df as f64;
    let cdf = |q: f64| ncchisq_cdf_raw(q, df, dist.nc);
    let mut hi = dist.bracket_hi();
    while cdf(hi) < u {
        hi *= 2.0;
    }
    Ok(bisect_increasing(cdf, 0.0, hi, u, 1e-13, 1e-15 * hi))
}

// ---------------------------------------------------------------------------
// Beta / Student t
// ---------------------------------------------------------------------------

/// Regularized incomplete beta `I_x(a, b)`, with `y = 1 - x` supplied by the
/// caller so that it can be formed without cancellation.
pub(crate) fn beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - beta_reg(b, a, y, x);
    }
    let ln_x = if x < 0.5 { x.ln() } else { (-y).ln_1p() };
    let ln_y = if y < 0.5 { y.ln() } else { (-x).ln_1p() };
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * ln_x + b * ln_y).exp() / a;
    front * beta_cf(a, b, x)
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Student-t CDF without argument checks; `df` may be fractional.
pub(crate) fn student_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == 0.0 {
        return 0.5;
    }
    let t2 = t * t;
    let denom = df + t2;
    // P(|T| > |t|) = I_{df/(df+t²)}(df/2, 1/2)
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, df / denom, t2 / denom);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t CDF with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: u32) -> Result<f64> {
    if df < 1 {
        return Err(FabError::domain("t_cdf", "df must be >= 1"));
    }
    if !x.is_finite() {
        return Err(FabError::domain("t_cdf", format!("non-finite argument {x}")));
    }
    Ok(student_cdf(x, df as f64))
}

/// Student-t quantile, by bisection on the CDF.
pub fn t_quantile(u: f64, df: u32) -> Result<f64> {
    check_unit("t_quantile", u)?;
    if df < 1 {
        return Err(FabError::domain("t_quantile", "df must be >= 1"));
    }
    let nu = df as f64;
    let mut hi = 1.0;
    while student_cdf(hi, nu) < u {
        hi *= 2.0;
    }
    let mut lo = -1.0;
    while student_cdf(lo, nu) > u {
        lo *= 2.0;
    }
    Ok(bisect_increasing(|t| student_cdf(t, nu), lo, hi, u, 0.0, 1e-15 * hi.abs().max(1.0)))
}

// ---------------------------------------------------------------------------
// ||T + b||²
// ---------------------------------------------------------------------------

/// `P(|S + shift| <= s)` for a symmetric pivot `S` with CDF `cdf`.
pub(crate) fn abs_shift_cdf<F: Fn(f64) -> f64>(cdf: F, s: f64, shift: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    (cdf(s - shift) - cdf(-s - shift)).max(0.0)
}

/// Simulated draws of the pivot `T = Σ̂^{-1/2} W`, with `W ~ N_p(0, I)` and
/// `ν Σ̂ ~ Wishart(ν, I)` independent, where `Σ̂^{-1/2}` is the transpose of the
/// lower Cholesky factor of `Σ̂^{-1}` (so that `||T||² = Wᵀ Σ̂^{-1} W`).
#[derive(Debug, Clone)]
pub struct ShiftedTSq {
    dim: usize,
    df: u32,
    seed: u64,
    draws: Vec<f64>,
}

impl ShiftedTSq {
    pub fn simulate(dim: usize, df: u32, reps: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(FabError::domain("shifted_t_sq", "dimension must be >= 1"));
        }
        if reps < MIN_SHIFTED_T_REPS {
            return Err(FabError::domain(
                "shifted_t_sq",
                format!("reps = {reps} below the minimum {MIN_SHIFTED_T_REPS}"),
            ));
        }
        if (df as usize) < dim {
            return Err(FabError::domain(
                "shifted_t_sq",
                format!("df = {df} must be >= dimension {dim} for a nonsingular Wishart"),
            ));
        }
        let mut draws = Vec::with_capacity(reps * dim);
        for r in 0..reps {
            let mut rng = replicate_rng(seed, r as u64);
            draws.extend(draw_pivot(dim, df, &mut rng).iter());
        }
        Ok(Self { dim, df, seed, draws })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn df(&self) -> u32 {
        self.df
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reps(&self) -> usize {
        self.draws.len() / self.dim
    }

    /// Empirical `u` quantile of `||T + b||²`.
    pub fn quantile(&self, b: &[f64], u: f64) -> Result<f64> {
        check_unit("shifted_t_sq_quantile", u)?;
        if b.len() != self.dim {
            return Err(FabError::DimensionMismatch {
                expected: self.dim,
                got: b.len(),
            });
        }
        let mut values: Vec<f64> = self
            .draws
            .chunks_exact(self.dim)
            .map(|t| t.iter().zip(b).map(|(ti, bi)| (ti + bi) * (ti + bi)).sum())
            .collect();
        let idx = ((u * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
        let (_, q, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
        Ok(*q)
    }
}

fn draw_pivot(dim: usize, df: u32, rng: &mut impl Rng) -> DVector<f64> {
    let w = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Bartlett decomposition: ν Σ̂ = A Aᵀ
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new((df as usize - i) as f64).expect("positive df");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let sigma_hat = (&a * a.transpose()) / df as f64;
    let inv = sigma_hat
        .cholesky()
        .expect("Wishart draw is positive definite")
        .inverse();
    let c = inv.cholesky().expect("inverse is positive definite").l();
    c.transpose() * w
}

/// `u` quantile of `||T + b||²` for `T` the Student-type pivot with `df`
/// degrees of freedom.
///
/// One-dimensional shifts are handled exactly through the t CDF; higher
/// dimensions use `reps` seeded draws of the pivot.
pub fn shifted_t_sq_quantile(b: &[f64], u: f64, df: u32, reps: usize, seed: u64) -> Result<f64> {
    check_unit("shifted_t_sq_quantile", u)?;
    if df < 1 {
        return Err(FabError::domain("shifted_t_sq_quantile", "df must be >= 1"));
    }
    if reps < MIN_SHIFTED_T_REPS {
        return Err(FabError::domain(
            "shifted_t_sq_quantile",
            format!("reps = {reps} below the minimum {MIN_SHIFTED_T_REPS}"),
        ));
    }
    match b {
        [] => Err(FabError::domain("shifted_t_sq_quantile", "empty shift vector")),
        [shift] => {
            let nu = df as f64;
            let cdf = |s: f64| abs_shift_cdf(|t| student_cdf(t, nu), s, *shift);
            let mut hi = shift.abs() + 10.0;
            while cdf(hi) < u {
                hi *= 2.0;
            }
            let s = bisect_increasing(cdf, 0.0, hi, u, 1e-13, 1e-15 * hi);
            Ok(s * s)
        }
        _ => ShiftedTSq::simulate(b.len(), df, reps, seed)?.quantile(b, u),
    }
}
